"""Ensemble inference: posterior model probabilities, component tests,
model-averaged and conditional estimates, prediction intervals, I-squared,
estimated marginal means, and Savage-Dickey tests.

All resampling is stratified and seed-derived, so summaries are reproducible
for a fixed ensemble, fits, and seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .data import Transform, apply_transform, quantile
from .inference.mcmc import FitResult
from .modelspace import DesignMatrix, Ensemble, ModelSpec

MIXTURE_SIZE = 20_000
INFINITE_BF_EXCLUSION_MASS = 1e-12
BF_INSTABILITY_THRESHOLD = 100.0

# Neutral value a parameter takes in models that exclude it; parameters
# mapped to None only support conditional summaries.
_EXCLUSION_VALUE = {"mu": 0.0, "tau": 0.0, "pet": 0.0, "peese": 0.0}


def _exclusion_value(param: str):
    if param in _EXCLUSION_VALUE:
        return _EXCLUSION_VALUE[param]
    if param.startswith("beta:"):
        return 0.0
    if param.startswith("omega["):
        return 1.0
    return None  # rho and anything else without a neutral value


def posterior_model_probs(fits: list[FitResult]) -> np.ndarray:
    """Posterior model probabilities from prior mass and marginal likelihoods."""
    logw = np.array([math.log(f.model.prior_prob) + f.log_marglik for f in fits])
    if not np.all(np.isfinite(logw)):
        raise ValueError("missing or non-finite log marginal likelihood")
    return np.exp(logw - logsumexp(logw))


@dataclass(frozen=True)
class ComponentTest:
    """Prior-to-posterior inclusion comparison for one model component."""

    component: str
    prior_prob: float
    posterior_prob: float
    bf: float | None  # inclusion Bayes factor (BF10); None when undefined
    display_infinite: bool = False

    def bf01(self) -> float | None:
        if self.bf is None:
            return None
        return math.inf if self.bf == 0 else 1.0 / self.bf

    def to_json(self) -> dict:
        return {
            "component": self.component,
            "prior_prob": self.prior_prob,
            "posterior_prob": self.posterior_prob,
            "bf": None if self.bf is None else (self.bf if math.isfinite(self.bf) else "inf"),
            "display_infinite": self.display_infinite,
        }


def inclusion_bf(probs: np.ndarray, ensemble: Ensemble, component: str) -> ComponentTest:
    """Inclusion Bayes factor: change from prior to posterior inclusion odds.

    Undefined (``bf=None``) when the prior inclusion probability is 0 or 1,
    e.g. in a single-model analysis.  The Bayes factor is flagged for
    infinity display when the posterior exclusion mass underflows
    ``INFINITE_BF_EXCLUSION_MASS``; the numeric value is retained.
    """
    prior_p = ensemble.component_prior_prob(component)
    included = ensemble.component_indicator(component)
    post_p = float(np.sum(probs[included]))
    if prior_p <= 0.0 or prior_p >= 1.0:
        return ComponentTest(component, prior_p, post_p, bf=None)
    prior_odds = prior_p / (1.0 - prior_p)
    exclusion = 1.0 - post_p
    if exclusion < INFINITE_BF_EXCLUSION_MASS:
        bf = math.inf if exclusion <= 0.0 else (post_p / exclusion) / prior_odds
        return ComponentTest(component, prior_p, post_p, bf=bf, display_infinite=True)
    bf = (post_p / exclusion) / prior_odds
    return ComponentTest(component, prior_p, post_p, bf=bf)


def _allocate(weights: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder allocation of ``total`` slots proportional to weights."""
    raw = weights * total
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def mixture_draws(
    fits: list[FitResult],
    probs: np.ndarray,
    params: list[str],
    mode: str = "averaged",
    size: int = MIXTURE_SIZE,
    seed: int = 1,
) -> dict[str, np.ndarray]:
    """Jointly resampled draws of ``params`` from the model mixture.

    ``averaged`` mixes all models with their posterior probabilities,
    substituting each parameter's neutral exclusion value in models that
    drop it; ``conditional`` renormalizes over the models that actually carry
    the first parameter.  Rows are sampled jointly (one index stream per
    model), preserving within-model parameter dependence.
    """
    if mode not in ("averaged", "conditional"):
        raise ValueError("mode must be 'averaged' or 'conditional'")
    weights = np.asarray(probs, dtype=float).copy()
    anchor = params[0]
    has_param = np.array([anchor in f.draws.names for f in fits])
    if mode == "conditional":
        weights = weights * has_param
        total = weights.sum()
        if total <= 0:
            raise ValueError(f"no posterior mass on models carrying {anchor!r}")
        weights = weights / total
    else:
        for p in params:
            if _exclusion_value(p) is None and not all(p in f.draws.names for f in fits):
                raise ValueError(f"parameter {p!r} has no exclusion value; use conditional mode")
    counts = _allocate(weights, size)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(91,)))
    out = {p: np.empty(size) for p in params}
    pos = 0
    for m, fit in enumerate(fits):
        n_m = counts[m]
        if n_m == 0:
            continue
        n_avail = fit.draws.n_total
        idx = rng.integers(0, n_avail, size=n_m) if n_avail else None
        for p in params:
            if p in fit.draws.names:
                out[p][pos : pos + n_m] = fit.draws.pooled(p)[idx]
            else:
                value = _exclusion_value(p)
                if value is None:
                    raise ValueError(f"model {m} lacks {p!r} and no exclusion value exists")
                out[p][pos : pos + n_m] = value
        pos += n_m
    return out


def averaged_draws(
    fits: list[FitResult],
    probs: np.ndarray,
    param: str,
    mode: str = "averaged",
    size: int = MIXTURE_SIZE,
    seed: int = 1,
) -> np.ndarray:
    return mixture_draws(fits, probs, [param], mode=mode, size=size, seed=seed)[param]


def prediction_interval(
    mu_draws: np.ndarray,
    tau_draws: np.ndarray,
    level: float = 0.95,
    seed: int = 1,
) -> tuple[float, float]:
    """Central interval for a new study's true effect.

    Draws ``mu + tau * Z`` with fresh standard-normal noise per posterior
    draw, so the interval integrates over both parameter uncertainty and
    between-study spread.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(17,)))
    z = rng.standard_normal(len(mu_draws))
    predictive = mu_draws + tau_draws * z
    a = (1.0 - level) / 2.0
    return float(quantile(predictive, a)), float(quantile(predictive, 1.0 - a))


def typical_sampling_variance(se: np.ndarray) -> float:
    """Higgins-Thompson typical within-study variance.

    ``s2 = (k - 1) sum(w) / ((sum w)^2 - sum(w^2))`` with inverse-variance
    weights; the denominator of the I-squared statistic.
    """
    w = 1.0 / np.asarray(se, dtype=float) ** 2
    k = len(w)
    if k < 2:
        # single study: the typical variance degenerates to that study's own
        return float(1.0 / w[0])
    return float((k - 1) * w.sum() / (w.sum() ** 2 - (w**2).sum()))


def i_squared(tau_draws: np.ndarray, se: np.ndarray) -> np.ndarray:
    """Per-draw percentage of total variance due to heterogeneity."""
    s2 = typical_sampling_variance(se)
    t2 = np.asarray(tau_draws, dtype=float) ** 2
    return 100.0 * t2 / (t2 + s2)


# ---------------------------------------------------------------------------
# density estimation for Savage-Dickey ratios


def ucv_bandwidth(x: np.ndarray, max_n: int = 2000) -> float:
    """Gaussian-kernel bandwidth by unbiased (least-squares) cross-validation.

    Minimizes the closed-form UCV criterion on a deterministic subsample and
    a log-spaced grid around the Silverman rule.
    """
    xs = np.asarray(x, dtype=float)
    if len(xs) > max_n:
        # deterministic subsample; quantile-stratified thinning would bias
        # the cross-validation toward oversmoothing
        idx = np.random.default_rng(1612).choice(len(xs), size=max_n, replace=False)
        xs = xs[idx]
    xs = np.sort(xs)
    n = len(xs)
    sd = xs.std(ddof=1)
    iqr = np.subtract(*np.percentile(xs, [75, 25]))
    spread = min(sd, iqr / 1.349) if iqr > 0 else sd
    if spread <= 0:
        return max(sd, 1e-6)
    h0 = 0.9 * spread * n ** (-0.2)
    d2 = (xs[:, None] - xs[None, :]) ** 2
    best_h, best_val = h0, np.inf
    for h in np.geomspace(h0 / 5.0, h0 * 5.0, 25):
        k2 = np.exp(-d2 / (4.0 * h * h)).sum() / (2.0 * math.sqrt(math.pi) * h)
        k1 = (np.exp(-d2 / (2.0 * h * h)).sum() - n) / (math.sqrt(2.0 * math.pi) * h)
        val = k2 / n**2 - 2.0 * k1 / (n * (n - 1))
        if val < best_val:
            best_val, best_h = val, h
    return float(best_h)


def kde_density(x: np.ndarray, at: float, boundary: float | None = None, bandwidth: float | None = None) -> float:
    """Gaussian KDE evaluated at one point, with optional boundary reflection."""
    x = np.asarray(x, dtype=float)
    h = bandwidth if bandwidth is not None else ucv_bandwidth(x)
    z = (at - x) / h
    dens = np.exp(-0.5 * z * z).sum() / (len(x) * h * math.sqrt(2.0 * math.pi))
    if boundary is not None:
        zr = (at + x - 2.0 * boundary) / h
        dens += np.exp(-0.5 * zr * zr).sum() / (len(x) * h * math.sqrt(2.0 * math.pi))
    return float(dens)


def _mixture_density_at(draws: np.ndarray, at: float, boundary: float | None) -> float:
    """Lebesgue density of a spike-and-slab draw mixture at ``at``.

    Model-averaged draws may contain an exact atom at the tested value
    (models that fix the parameter there).  The atom is the null hypothesis
    itself, not part of the continuous density, so it is removed from the
    kernel estimate and the continuous component is weighted by its mixture
    mass.
    """
    draws = np.asarray(draws, dtype=float)
    cont = draws[draws != at]
    if len(cont) < 10:
        return 0.0
    mass = len(cont) / len(draws)
    return mass * kde_density(cont, at, boundary=boundary)


def savage_dickey_bf(prior_draws: np.ndarray, posterior_draws: np.ndarray, at: float = 0.0, boundary: float | None = None) -> float:
    """Point-null Bayes factor as the prior-to-posterior density ratio at ``at``.

    Densities are the continuous components of the draw mixtures (exact
    atoms at the tested value excluded, their mass discounted), estimated by
    the boundary-corrected kernel estimator with cross-validated bandwidths;
    BF10 > 1 favors a value different from ``at``.
    """
    prior_dens = _mixture_density_at(prior_draws, at, boundary=boundary)
    post_dens = _mixture_density_at(posterior_draws, at, boundary=boundary)
    if post_dens <= 0:
        return math.inf
    return prior_dens / post_dens


# ---------------------------------------------------------------------------
# estimated marginal means


@dataclass(frozen=True)
class EmmResult:
    term: str
    level: str
    draws: np.ndarray
    bf: float | None = None

    def to_json(self) -> dict:
        return {"term": self.term, "level": self.level, "bf": self.bf}


def _emm_model_draws(fit: FitResult, design: DesignMatrix | None, term: str, level) -> np.ndarray | float:
    """Pooled EMM draws of one model (float 0.0 when fully excluded)."""
    if "mu" in fit.draws.names:
        base = fit.draws.pooled("mu").copy()
    else:
        base = None  # effect excluded -> intercept is exactly 0
    if term == "intercept" or design is None:
        return base if base is not None else 0.0
    block = design.term(term)
    if term not in fit.model.moderators:
        return base if base is not None else 0.0
    row = block.row(level)
    contrib = None
    for offset, col in enumerate(block.columns):
        name = f"beta:{term}:{col}"
        coldraws = fit.draws.pooled(name)
        contrib = coldraws * row[offset] if contrib is None else contrib + coldraws * row[offset]
    if base is None:
        return contrib
    return base + contrib


def _emm_prior_sampler(spec: ModelSpec, design: DesignMatrix | None, term: str, level, rng, n: int) -> np.ndarray | float:
    mu_prior = spec.priors["mu"]
    base = None if mu_prior.is_point else np.asarray(mu_prior.sample(rng, size=n), dtype=float)
    if base is None and mu_prior.params[0] != 0.0:
        base = np.full(n, mu_prior.params[0])
    if term == "intercept" or design is None or term not in spec.moderators:
        return base if base is not None else 0.0
    block = design.term(term)
    row = block.row(level)
    contrib = np.zeros(n)
    for offset, col in enumerate(block.columns):
        prior = spec.priors[f"beta:{term}:{col}"]
        contrib += np.asarray(prior.sample(rng, size=n), dtype=float) * row[offset]
    return contrib if base is None else base + contrib


def estimated_marginal_means(
    ensemble: Ensemble,
    fits: list[FitResult],
    probs: np.ndarray,
    design: DesignMatrix | None,
    term: str,
    levels=None,
    test_against_zero: bool = False,
    size: int = MIXTURE_SIZE,
    seed: int = 1,
) -> list[EmmResult]:
    """Model-averaged predicted effects per level of a moderator term.

    With orthonormal contrasts and standardized continuous covariates the
    remaining terms average out exactly, so the EMM at a level is the
    intercept plus that level's contrast row against the term coefficients.
    ``test_against_zero`` adds a Savage-Dickey density-ratio test of each EMM
    against zero, using the model-implied prior mixture.
    """
    if term != "intercept":
        if term not in ensemble.moderator_terms:
            raise KeyError(f"term {term!r} is not a moderator of this ensemble")
        block = design.term(term)
        if levels is None:
            if not block.levels:
                raise ValueError(f"continuous term {term!r} needs explicit grid values")
            levels = list(block.levels)
    else:
        levels = ["(overall)"]
    counts = _allocate(np.asarray(probs, dtype=float), size)
    prior_counts = _allocate(np.array([m.prior_prob for m in ensemble.models]), size)
    results = []
    for level in levels:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(29, _stable_key(term), _stable_key(str(level)))))
        post = np.empty(size)
        pos = 0
        for m, fit in enumerate(fits):
            n_m = counts[m]
            if n_m == 0:
                continue
            dm = _emm_model_draws(fit, design, term, level)
            if isinstance(dm, float):
                post[pos : pos + n_m] = dm
            else:
                idx = rng.integers(0, len(dm), size=n_m)
                post[pos : pos + n_m] = dm[idx]
            pos += n_m
        bf = None
        if test_against_zero:
            prior = np.empty(size)
            pos = 0
            for m, spec in enumerate(ensemble.models):
                n_m = prior_counts[m]
                if n_m == 0:
                    continue
                dm = _emm_prior_sampler(spec, design, term, level, rng, int(n_m))
                prior[pos : pos + n_m] = dm
                pos += n_m
            bf = savage_dickey_bf(prior, post, at=0.0)
        results.append(EmmResult(term=term, level=str(level), draws=post, bf=bf))
    return results


def _stable_key(text: str) -> int:
    """Deterministic small integer from a string (hash() is salted per run)."""
    acc = 0
    for ch in text.encode("utf-8"):
        acc = (acc * 131 + ch) % (2**31 - 1)
    return acc


# ---------------------------------------------------------------------------
# full ensemble summary


@dataclass(frozen=True)
class Estimate:
    mean: float
    median: float
    lower: float
    upper: float
    pi_lower: float | None = None
    pi_upper: float | None = None

    def to_json(self) -> dict:
        doc = {"mean": self.mean, "median": self.median, "lower": self.lower, "upper": self.upper}
        if self.pi_lower is not None:
            doc["pi_lower"] = self.pi_lower
            doc["pi_upper"] = self.pi_upper
        return doc


def _estimate(draws: np.ndarray, level: float, pi: tuple[float, float] | None = None) -> Estimate:
    a = (1.0 - level) / 2.0
    return Estimate(
        mean=float(np.mean(draws)),
        median=float(quantile(draws, 0.5)),
        lower=float(quantile(draws, a)),
        upper=float(quantile(draws, 1.0 - a)),
        pi_lower=None if pi is None else pi[0],
        pi_upper=None if pi is None else pi[1],
    )


@dataclass(frozen=True)
class EnsembleSummary:
    tests: tuple[ComponentTest, ...]
    estimates: dict[str, Estimate]
    conditional: dict[str, Estimate]
    transformed: dict[str, Estimate]
    conditional_transformed: dict[str, Estimate]
    coefficients: dict[str, Estimate]
    conditional_coefficients: dict[str, Estimate]
    bias_estimates: dict[str, Estimate]
    emm: tuple[EmmResult, ...]
    emm_estimates: dict[str, Estimate]
    footnotes: tuple[str, ...]
    transform: Transform
    has_moderators: bool
    multilevel: bool
    warnings: tuple[str, ...]
    interval_level: float = 0.95

    def to_json(self) -> dict:
        return {
            "tests": [t.to_json() for t in self.tests],
            "estimates": {k: v.to_json() for k, v in self.estimates.items()},
            "conditional": {k: v.to_json() for k, v in self.conditional.items()},
            "transformed": {k: v.to_json() for k, v in self.transformed.items()},
            "conditional_transformed": {k: v.to_json() for k, v in self.conditional_transformed.items()},
            "coefficients": {k: v.to_json() for k, v in self.coefficients.items()},
            "conditional_coefficients": {k: v.to_json() for k, v in self.conditional_coefficients.items()},
            "bias_estimates": {k: v.to_json() for k, v in self.bias_estimates.items()},
            "emm": [
                dict(e.to_json(), estimate=self.emm_estimates[f"{e.term}={e.level}"].to_json())
                for e in self.emm
            ],
            "footnotes": list(self.footnotes),
            "transform": self.transform.value,
            "has_moderators": self.has_moderators,
            "multilevel": self.multilevel,
            "warnings": list(self.warnings),
            "interval_level": self.interval_level,
        }


def evidence_label(bf: float) -> str:
    """Conventional verbal band for a Bayes factor (in favor when > 1)."""
    if bf >= 1:
        value, direction = bf, "for"
    else:
        value, direction = 1.0 / bf, "against"
    if value < 3:
        strength = "weak"
    elif value < 10:
        strength = "moderate"
    elif value < 100:
        strength = "strong"
    else:
        strength = "extreme"
    return f"{strength} evidence {direction}"


def summarize(
    ensemble: Ensemble,
    fits: list[FitResult],
    se: np.ndarray,
    design: DesignMatrix | None = None,
    transform: Transform = Transform.IDENTITY,
    level: float = 0.95,
    seed: int = 1,
    emm_terms: tuple[str, ...] = (),
    emm_test: bool = False,
    size: int = MIXTURE_SIZE,
) -> EnsembleSummary:
    """Combine per-model fits into the full ensemble summary."""
    probs = posterior_model_probs(fits)
    tests = tuple(inclusion_bf(probs, ensemble, c) for c in ensemble.components())

    multilevel = any(m.multilevel for m in ensemble.models)
    core = ["mu", "tau"]
    joint = mixture_draws(fits, probs, core, mode="averaged", size=size, seed=seed)
    pi = prediction_interval(joint["mu"], joint["tau"], level=level, seed=seed)
    estimates = {
        "mu": _estimate(joint["mu"], level, pi=pi),
        "tau": _estimate(joint["tau"], level),
        "i2": _estimate(i_squared(joint["tau"], se), level),
    }
    transformed = {"mu": _estimate(apply_transform(transform, joint["mu"]), level,
                                   pi=(apply_transform(transform, pi[0]), apply_transform(transform, pi[1])))}

    cond: dict[str, Estimate] = {}
    cond_t: dict[str, Estimate] = {}
    cjoint = {}
    for p in core:
        try:
            cjoint[p] = averaged_draws(fits, probs, p, mode="conditional", size=size, seed=seed)
        except ValueError:
            continue
    if "mu" in cjoint and "tau" in cjoint:
        # conditional PI pairs mu and tau conditional on their own components
        cpi = prediction_interval(cjoint["mu"], cjoint["tau"], level=level, seed=seed)
    else:
        cpi = None
    if "mu" in cjoint:
        cond["mu"] = _estimate(cjoint["mu"], level, pi=cpi)
        cond_t["mu"] = _estimate(
            apply_transform(transform, cjoint["mu"]), level,
            pi=None if cpi is None else (apply_transform(transform, cpi[0]), apply_transform(transform, cpi[1])),
        )
    if "tau" in cjoint:
        cond["tau"] = _estimate(cjoint["tau"], level)
        cond["i2"] = _estimate(i_squared(cjoint["tau"], se), level)
    if multilevel:
        rho_draws = averaged_draws(fits, probs, "rho", mode="conditional", size=size, seed=seed)
        estimates["rho"] = _estimate(rho_draws, level)
        cond["rho"] = estimates["rho"]

    coefficients: dict[str, Estimate] = {}
    conditional_coefficients: dict[str, Estimate] = {}
    if design is not None:
        for block in design.terms:
            for col in block.columns:
                name = f"beta:{block.name}:{col}"
                if not any(name in f.draws.names for f in fits):
                    continue
                coefficients[name] = _estimate(
                    averaged_draws(fits, probs, name, mode="averaged", size=size, seed=seed), level
                )
                conditional_coefficients[name] = _estimate(
                    averaged_draws(fits, probs, name, mode="conditional", size=size, seed=seed), level
                )

    bias_estimates: dict[str, Estimate] = {}
    bias_params = sorted({n for f in fits for n in f.draws.names if n.startswith("omega[") or n in ("pet", "peese")})
    for name in bias_params:
        bias_estimates[name] = _estimate(
            averaged_draws(fits, probs, name, mode="conditional", size=size, seed=seed), level
        )

    emm_results: list[EmmResult] = []
    emm_estimates: dict[str, Estimate] = {}
    for term in emm_terms:
        for res in estimated_marginal_means(
            ensemble, fits, probs, design, term, test_against_zero=emm_test, size=size, seed=seed
        ):
            emm_results.append(res)
            emm_estimates[f"{res.term}={res.level}"] = _estimate(
                apply_transform(transform, res.draws), level
            )

    footnotes: list[str] = []
    for t in tests:
        if t.bf is not None and (t.display_infinite or t.bf > BF_INSTABILITY_THRESHOLD):
            footnotes.append(
                f"{t.component}: Bayes factors larger than {BF_INSTABILITY_THRESHOLD:g} may be unstable."
            )
    warnings = tuple(w for f in fits for w in (f"model '{f.model.label}': {msg}" for msg in f.warnings))

    return EnsembleSummary(
        tests=tests,
        estimates=estimates,
        conditional=cond,
        transformed=transformed,
        conditional_transformed=cond_t,
        coefficients=coefficients,
        conditional_coefficients=conditional_coefficients,
        bias_estimates=bias_estimates,
        emm=tuple(emm_results),
        emm_estimates=emm_estimates,
        footnotes=tuple(footnotes),
        transform=transform,
        has_moderators=design is not None and bool(design.terms),
        multilevel=multilevel,
        warnings=warnings,
        interval_level=level,
    )
