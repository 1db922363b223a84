"""Adaptive Metropolis-within-Gibbs sampling and per-model fitting.

Every chain draws from an independent, seed-derived random stream, so a fit
is bit-reproducible for fixed settings no matter how chains are scheduled.
Step sizes adapt during the adaptation phase toward a 20-40% acceptance rate
and are frozen afterwards.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..likelihood import LikelihoodContext
from ..modelspace import ModelSpec
from .diagnostics import Diag, diagnose
from .marglik import (
    QUADRATURE_MAX_DIM,
    MarginalLikelihoodError,
    MarglikResult,
    bridge_logml,
    quadrature_logml,
)
from .program import ModelProgram

DEFAULT_TARGET_ESS = 500.0
_ACCEPT_TARGET = 0.30
_INIT_RETRIES = 100


@dataclass(frozen=True)
class AutofitSettings:
    """Iterate sampling until the minimum ESS reaches the target or time runs out."""

    target_ess: float = DEFAULT_TARGET_ESS
    max_time: float = 600.0  # seconds of wall clock


@dataclass(frozen=True)
class McmcSettings:
    chains: int = 4
    adaptation: int = 1000
    burnin: int = 2000
    sampling: int = 5000
    seed: int = 1
    autofit: AutofitSettings | None = None

    def __post_init__(self):
        if self.chains < 2:
            raise ValueError("need at least 2 chains")
        for name in ("adaptation", "burnin", "sampling"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class PosteriorDraws:
    """Post-burnin draws on the constrained scale, one array per chain."""

    names: tuple[str, ...]
    chains: np.ndarray  # (n_chains, n_iterations, n_params)

    def parameter(self, name: str) -> np.ndarray:
        """(chains, iterations) draws of one parameter."""
        try:
            j = self.names.index(name)
        except ValueError:
            raise KeyError(f"no draws for parameter {name!r}") from None
        return self.chains[:, :, j]

    @property
    def n_total(self) -> int:
        return self.chains.shape[0] * self.chains.shape[1]

    def pooled(self, name: str) -> np.ndarray:
        return self.parameter(name).reshape(-1)


@dataclass(frozen=True)
class FitResult:
    model: ModelSpec
    draws: PosteriorDraws
    draws_unc: np.ndarray  # (chains, iterations, n_unc), sampler scale
    log_marglik: float
    log_marglik_mcse: float
    marglik_method: str
    diagnostics: dict[str, Diag]
    warnings: tuple[str, ...]
    settings: McmcSettings

    @property
    def min_ess(self) -> float:
        if not self.diagnostics:
            return math.inf
        return min(d.ess for d in self.diagnostics.values())


def _chain_rng(seed: int, stream_key: tuple[int, ...], chain: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(*stream_key, chain)))


def _run_chain(program: ModelProgram, rng: np.random.Generator, settings: McmcSettings):
    d = program.n_unc
    z = None
    lp = -math.inf
    for _ in range(_INIT_RETRIES):
        z = program.sample_unc(rng)
        lp = program.logpost_unc(z)
        if math.isfinite(lp):
            break
    if not math.isfinite(lp):
        raise RuntimeError(
            f"could not find a finite log-posterior initialization in {_INIT_RETRIES} draws"
        )
    log_step = np.full(d, math.log(0.5))
    proposals = np.zeros(d)
    total = settings.adaptation + settings.burnin + settings.sampling
    keep_from = settings.adaptation + settings.burnin
    kept = np.empty((settings.sampling, len(program.param_labels)))
    kept_unc = np.empty((settings.sampling, d))
    coord_site = np.empty(d, dtype=int)
    for s_idx, (a, b) in enumerate(program._offsets):
        coord_site[a:b] = s_idx
    site_lp = np.array([program.site_logprior(i, z) for i in range(len(program.sites))])
    lik = program.loglik_unc(z)
    for it in range(total):
        adapting = it < settings.adaptation
        for j in range(d):
            s_idx = int(coord_site[j])
            z_old = z[j]
            z[j] = z_old + math.exp(log_step[j]) * rng.standard_normal()
            new_site_lp = program.site_logprior(s_idx, z)
            if math.isfinite(new_site_lp):
                new_lik = program.loglik_unc(z)
                log_ratio = (new_site_lp - site_lp[s_idx]) + (new_lik - lik)
            else:
                new_lik = -math.inf
                log_ratio = -math.inf
            accept = math.log(rng.random() + 1e-300) < log_ratio
            if accept:
                site_lp[s_idx] = new_site_lp
                lik = new_lik
            else:
                z[j] = z_old
            if adapting:
                proposals[j] += 1.0
                gain = 1.0 / proposals[j] ** 0.6
                log_step[j] += gain * ((1.0 if accept else 0.0) - _ACCEPT_TARGET)
        if it >= keep_from:
            k = it - keep_from
            kept[k] = program.constrained(z)
            kept_unc[k] = z
    return kept, kept_unc


def fit_model(
    spec: ModelSpec,
    ctx: LikelihoodContext,
    settings: McmcSettings,
    stream_key: tuple[int, ...] = (),
    marglik_method: str = "auto",
) -> FitResult:
    """Fit one model by MCMC and attach its log marginal likelihood.

    ``stream_key`` namespaces the random streams so ensemble fits of many
    models under one seed stay independent and reproducible.
    ``marglik_method`` is ``auto`` (quadrature when the model has at most
    three free parameters, bridge sampling otherwise), ``quadrature``,
    ``bridge``, or ``none``.
    """
    program = ModelProgram(spec, ctx)
    warnings: list[str] = []
    if program.n_unc == 0:
        value = program.fixed_loglik()
        draws = PosteriorDraws(names=(), chains=np.empty((settings.chains, 0, 0)))
        return FitResult(
            model=spec,
            draws=draws,
            draws_unc=np.empty((settings.chains, 0, 0)),
            log_marglik=value,
            log_marglik_mcse=0.0,
            marglik_method="exact",
            diagnostics={},
            warnings=(),
            settings=settings,
        )

    per_chain = []
    per_chain_unc = []
    for c in range(settings.chains):
        rng = _chain_rng(settings.seed, stream_key, c)
        kept, kept_unc = _run_chain(program, rng, settings)
        per_chain.append(kept)
        per_chain_unc.append(kept_unc)
    chains = np.stack(per_chain)
    chains_unc = np.stack(per_chain_unc)
    draws = PosteriorDraws(names=tuple(program.param_labels), chains=chains)

    diagnostics = {
        name: diagnose(chains[:, :, j]) for j, name in enumerate(program.param_labels)
    }
    target = settings.autofit.target_ess if settings.autofit else DEFAULT_TARGET_ESS
    low = [n for n, dg in diagnostics.items() if dg.ess < target]
    if low:
        warnings.append(
            f"effective sample size below {target:g} for: {', '.join(sorted(low))}"
        )
    bad_rhat = [n for n, dg in diagnostics.items() if math.isfinite(dg.rhat) and dg.rhat > 1.01]
    if bad_rhat:
        warnings.append(f"R-hat above 1.01 for: {', '.join(sorted(bad_rhat))}")

    if marglik_method == "none":
        ml = MarglikResult(value=math.nan, mcse=math.nan, method="none")
    else:
        ml = compute_marglik(program, chains_unc, settings, stream_key, marglik_method)
    return FitResult(
        model=spec,
        draws=draws,
        draws_unc=chains_unc,
        log_marglik=ml.value,
        log_marglik_mcse=ml.mcse,
        marglik_method=ml.method,
        diagnostics=diagnostics,
        warnings=tuple(warnings),
        settings=settings,
    )


def _auto_method(program: ModelProgram) -> str:
    """Quadrature when it is cheap and exact enough, bridge otherwise.

    Quadrature is permitted up to three free parameters.  The automatic
    policy uses it for normal-likelihood models (where the per-point
    integrand is cheap and the location parameter usually collapses
    analytically); selection-model likelihoods are expensive per evaluation,
    so multi-dimensional cubes go to bridge sampling instead.
    """
    if program.n_unc == 0:
        return "quadrature"
    if program.n_unc > QUADRATURE_MAX_DIM:
        return "bridge"
    if program.spec.bias.kind == "selection":
        return "quadrature" if program.n_unc <= 1 else "bridge"
    return "quadrature"


def compute_marglik(
    program: ModelProgram,
    chains_unc: np.ndarray,
    settings: McmcSettings,
    stream_key: tuple[int, ...] = (),
    method: str = "auto",
) -> MarglikResult:
    if method == "auto":
        method = _auto_method(program)
    if method == "quadrature":
        return quadrature_logml(program)
    if method == "bridge":
        seed_seq = np.random.SeedSequence(entropy=settings.seed, spawn_key=(*stream_key, 1_000_003))
        return bridge_logml(program, chains_unc, seed_seq)
    raise ValueError(f"unknown marginal-likelihood method {method!r}")


def log_marginal_likelihood(
    spec: ModelSpec,
    ctx: LikelihoodContext,
    method: str = "auto",
    settings: McmcSettings | None = None,
    fit: FitResult | None = None,
    stream_key: tuple[int, ...] = (),
) -> MarglikResult:
    """Standalone marginal-likelihood computation.

    Quadrature needs no draws; bridge sampling reuses ``fit`` when given and
    runs a fresh MCMC otherwise.
    """
    program = ModelProgram(spec, ctx)
    if program.n_unc == 0:
        return MarglikResult(value=program.fixed_loglik(), mcse=0.0, method="exact")
    if method == "auto":
        method = _auto_method(program)
    if method == "quadrature":
        return quadrature_logml(program)
    if method == "bridge":
        settings = settings or McmcSettings()
        if fit is None:
            fit = fit_model(spec, ctx, settings, stream_key=stream_key, marglik_method="none")
        seed_seq = np.random.SeedSequence(entropy=settings.seed, spawn_key=(*stream_key, 1_000_003))
        return bridge_logml(program, fit.draws_unc, seed_seq)
    raise ValueError(f"unknown marginal-likelihood method {method!r}")


def autofit(
    spec: ModelSpec,
    ctx: LikelihoodContext,
    settings: McmcSettings,
    stream_key: tuple[int, ...] = (),
    marglik_method: str = "auto",
) -> FitResult:
    """Double the sampling iterations until the ESS target is met.

    Returns the best fit obtained inside the wall-clock budget; the schedule
    of attempted sampling sizes is appended to the fit warnings, and a
    time-budget warning is attached whenever the target was not reached.
    """
    if settings.autofit is None:
        raise ValueError("autofit settings missing from McmcSettings")
    target = settings.autofit.target_ess
    budget = settings.autofit.max_time
    start = time.monotonic()
    schedule: list[int] = []
    current = settings
    best: FitResult | None = None
    while True:
        schedule.append(current.sampling)
        fit = fit_model(spec, ctx, current, stream_key=stream_key, marglik_method=marglik_method)
        if best is None or fit.min_ess > best.min_ess:
            best = fit
        if best.min_ess >= target:
            break
        elapsed = time.monotonic() - start
        if elapsed >= budget:
            best = replace(
                best,
                warnings=best.warnings
                + ("maximum fitting time reached before the target effective sample size",),
            )
            break
        current = replace(current, sampling=current.sampling * 2)
    note = "autofit sampling schedule: " + ", ".join(str(s) for s in schedule)
    return replace(best, warnings=best.warnings + (note,))
