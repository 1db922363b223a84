"""Prior distributions, weight-function priors, and measure-specific profiles.

Everything here is an immutable value.  Samplers take an explicitly passed
``numpy.random.Generator`` so parallel chains can use independent streams.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Mapping

import numpy as np
from scipy import stats
from scipy.special import gammainccinv, gammaincinv, ndtri

from .data import Measure

# Ratio between the logOR and SMD scales (pi / sqrt(3), the standard
# logistic/normal variance matching used when converting between the two).
LOGOR_SCALE = math.pi / math.sqrt(3.0)
# Fisher's z scale relative to SMD via the small-effect linearization
# r ~ d/2 and z ~ r near zero.
FISHERS_Z_SCALE = 0.5

SCALE_FACTORS = {
    Measure.SMD: 1.0,
    Measure.LOGOR: LOGOR_SCALE,
    Measure.FISHERS_Z: FISHERS_Z_SCALE,
}


class Family(str, enum.Enum):
    POINT = "point"
    NORMAL = "normal"
    INVGAMMA = "invgamma"
    UNIFORM = "uniform"
    CAUCHY = "cauchy"
    GAMMA = "gamma"


_PARAM_NAMES = {
    Family.POINT: ("value",),
    Family.NORMAL: ("mean", "sd"),
    Family.INVGAMMA: ("shape", "scale"),
    Family.UNIFORM: ("lo", "hi"),
    Family.CAUCHY: ("location", "scale"),
    Family.GAMMA: ("shape", "rate"),
}


@dataclass(frozen=True)
class Prior:
    """A parameterized prior density with optional truncation.

    Families and parameters:

    ==========  =====================
    point       (value,)
    normal      (mean, sd)
    invgamma    (shape, scale)
    uniform     (lo, hi)
    cauchy      (location, scale)
    gamma       (shape, rate)
    ==========  =====================

    Truncation renormalizes the density to the intersection of the natural
    support with ``[lo, hi]``; evaluating ``logpdf`` outside returns ``-inf``.
    """

    family: Family
    params: tuple[float, ...]
    truncation: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        names = _PARAM_NAMES[self.family]
        if len(self.params) != len(names):
            raise ValueError(f"{self.family.value} takes parameters {names}, got {self.params}")
        p = dict(zip(names, self.params))
        if self.family is Family.NORMAL and p["sd"] <= 0:
            raise ValueError("normal sd must be > 0")
        if self.family is Family.INVGAMMA and (p["shape"] <= 0 or p["scale"] <= 0):
            raise ValueError("inverse-gamma shape and scale must be > 0")
        if self.family is Family.UNIFORM and not p["lo"] < p["hi"]:
            raise ValueError("uniform needs lo < hi")
        if self.family is Family.CAUCHY and p["scale"] <= 0:
            raise ValueError("cauchy scale must be > 0")
        if self.family is Family.GAMMA and (p["shape"] <= 0 or p["rate"] <= 0):
            raise ValueError("gamma shape and rate must be > 0")
        if self.truncation is not None:
            lo, hi = self.truncation
            if not lo < hi:
                raise ValueError("truncation needs lo < hi")
            object.__setattr__(self, "truncation", (float(lo), float(hi)))
            if self.family is not Family.POINT and self._mass() <= 0:
                raise ValueError("truncation interval carries no prior mass")

    @property
    def is_point(self) -> bool:
        return self.family is Family.POINT

    def _dist(self):
        p = self.params
        if self.family is Family.NORMAL:
            return stats.norm(loc=p[0], scale=p[1])
        if self.family is Family.INVGAMMA:
            return stats.invgamma(p[0], scale=p[1])
        if self.family is Family.UNIFORM:
            return stats.uniform(loc=p[0], scale=p[1] - p[0])
        if self.family is Family.CAUCHY:
            return stats.cauchy(loc=p[0], scale=p[1])
        if self.family is Family.GAMMA:
            return stats.gamma(p[0], scale=1.0 / p[1])
        raise ValueError(f"{self.family} has no continuous distribution")

    def _mass(self) -> float:
        lo, hi = self.truncation
        d = self._dist()
        return float(d.cdf(hi) - d.cdf(lo))

    def support(self) -> tuple[float, float]:
        """Effective support interval after truncation."""
        if self.family is Family.POINT:
            v = self.params[0]
            return (v, v)
        d = self._dist()
        lo, hi = d.support()
        if self.truncation is not None:
            lo, hi = max(lo, self.truncation[0]), min(hi, self.truncation[1])
        return float(lo), float(hi)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.family is Family.POINT:
            out = np.where(x == self.params[0], np.inf, -np.inf)
            return out if out.ndim else float(out)
        d = self._dist()
        out = d.logpdf(x)
        if self.truncation is not None:
            lo, hi = self.truncation
            out = np.where((x >= lo) & (x <= hi), out - math.log(self._mass()), -np.inf)
        return out if out.ndim else float(out)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.family is Family.POINT:
            out = np.where(x >= self.params[0], 1.0, 0.0)
            return out if out.ndim else float(out)
        d = self._dist()
        if self.truncation is None:
            out = d.cdf(x)
        else:
            lo, hi = self.truncation
            out = np.clip((d.cdf(np.clip(x, lo, hi)) - d.cdf(lo)) / self._mass(), 0.0, 1.0)
        return out if out.ndim else float(out)

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        if np.any((q < 0) | (q > 1)):
            raise ValueError("quantile levels must lie in [0, 1]")
        if self.family is Family.POINT:
            out = np.full_like(q, self.params[0])
            return out if out.ndim else float(out)
        d = self._dist()
        if self.truncation is None:
            out = d.ppf(q)
        else:
            lo, hi = self.truncation
            c_lo = d.cdf(lo)
            out = np.clip(d.ppf(c_lo + q * self._mass()), lo, hi)
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, size=None):
        if self.family is Family.POINT:
            v = self.params[0]
            return v if size is None else np.full(size, v)
        # inverse-CDF sampling keeps truncation exact and the stream usage
        # identical across families
        u = rng.random(size=size)
        return self.ppf(u)

    def scaled(self, factor: float) -> "Prior":
        """Change of measurement units: multiply location/scale parameters by ``factor``.

        Shapes are untouched; the inverse-gamma and gamma families are closed
        under this operation (scale -> factor * scale, rate -> rate / factor).
        """
        if factor <= 0:
            raise ValueError("scale factor must be > 0")
        f = float(factor)
        if self.family is Family.POINT:
            params = (self.params[0] * f,)
        elif self.family in (Family.NORMAL, Family.CAUCHY):
            params = (self.params[0] * f, self.params[1] * f)
        elif self.family is Family.INVGAMMA:
            params = (self.params[0], self.params[1] * f)
        elif self.family is Family.UNIFORM:
            params = (self.params[0] * f, self.params[1] * f)
        else:  # gamma
            params = (self.params[0], self.params[1] / f)
        trunc = None
        if self.truncation is not None:
            trunc = (self.truncation[0] * f, self.truncation[1] * f)
        return Prior(self.family, params, trunc)

    def to_json(self) -> dict:
        doc = {"family": self.family.value, "params": list(self.params)}
        if self.truncation is not None:
            doc["truncation"] = list(self.truncation)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Prior":
        trunc = tuple(doc["truncation"]) if doc.get("truncation") else None
        return cls(Family(doc["family"]), tuple(doc["params"]), trunc)


def scalar_logpdf(prior: Prior):
    """Build a fast float -> float log-density closure for ``prior``.

    Equivalent to ``prior.logpdf`` on scalars, but avoids per-call scipy
    distribution construction; used in the sampler hot path.
    """
    fam, p = prior.family, prior.params
    if fam is Family.POINT:
        v = p[0]
        return lambda x: math.inf if x == v else -math.inf
    if fam is Family.NORMAL:
        mean, sd = p
        c = -math.log(sd) - 0.5 * math.log(2.0 * math.pi)
        base = lambda x: c - 0.5 * ((x - mean) / sd) ** 2
        lo, hi = -math.inf, math.inf
    elif fam is Family.INVGAMMA:
        a, s = p
        c = a * math.log(s) - math.lgamma(a)
        base = lambda x: c - (a + 1.0) * math.log(x) - s / x if x > 0 else -math.inf
        lo, hi = 0.0, math.inf
    elif fam is Family.UNIFORM:
        lo, hi = p
        c = -math.log(hi - lo)
        base = lambda x: c
    elif fam is Family.CAUCHY:
        loc, s = p
        c = -math.log(math.pi * s)
        base = lambda x: c - math.log1p(((x - loc) / s) ** 2)
        lo, hi = -math.inf, math.inf
    else:  # gamma
        a, rate = p
        c = a * math.log(rate) - math.lgamma(a)
        base = lambda x: c + (a - 1.0) * math.log(x) - rate * x if x > 0 else -math.inf
        lo, hi = 0.0, math.inf
    if prior.truncation is not None:
        tlo, thi = prior.truncation
        lo, hi = max(lo, tlo), min(hi, thi)
        log_mass = math.log(prior._mass())
        return lambda x: (base(x) - log_mass) if lo <= x <= hi else -math.inf
    if prior.family in (Family.INVGAMMA, Family.GAMMA):
        return base
    return lambda x: base(x) if lo <= x <= hi else -math.inf


def scalar_ppf(prior: Prior):
    """Fast float -> float quantile closure (see :func:`scalar_logpdf`)."""
    fam, p = prior.family, prior.params
    if fam is Family.POINT:
        v = p[0]
        return lambda q: v
    if fam is Family.NORMAL:
        mean, sd = p
        base = lambda q: mean + sd * float(ndtri(q))
    elif fam is Family.INVGAMMA:
        a, s = p
        base = lambda q: s / float(gammainccinv(a, q))
    elif fam is Family.UNIFORM:
        lo, hi = p
        base = lambda q: lo + q * (hi - lo)
    elif fam is Family.CAUCHY:
        loc, s = p
        base = lambda q: loc + s * math.tan(math.pi * (q - 0.5))
    else:  # gamma
        a, rate = p
        base = lambda q: float(gammaincinv(a, q)) / rate
    if prior.truncation is None:
        return base
    d = prior._dist()
    c_lo = float(d.cdf(prior.truncation[0]))
    mass = prior._mass()
    tlo, thi = prior.truncation
    return lambda q: min(max(base(c_lo + q * mass), tlo), thi)


def point(value: float = 0.0) -> Prior:
    return Prior(Family.POINT, (value,))


def normal(mean: float, sd: float, truncation=None) -> Prior:
    return Prior(Family.NORMAL, (mean, sd), truncation)


def invgamma(shape: float, scale: float, truncation=None) -> Prior:
    return Prior(Family.INVGAMMA, (shape, scale), truncation)


def uniform(lo: float, hi: float) -> Prior:
    return Prior(Family.UNIFORM, (lo, hi))


def cauchy(location: float, scale: float, truncation=None) -> Prior:
    return Prior(Family.CAUCHY, (location, scale), truncation)


def gamma(shape: float, rate: float, truncation=None) -> Prior:
    return Prior(Family.GAMMA, (shape, rate), truncation)


@dataclass(frozen=True)
class WeightPrior:
    """Cumulative-Dirichlet prior over a step publication-selection function.

    ``cutpoints`` are p-value thresholds splitting (0, 1) into bins ordered
    from most to least significant; ``alphas`` are the Dirichlet
    concentrations of the per-bin increments.  Weights are the reverse
    cumulative sums of the increments, so the most-significant bin always has
    weight 1 and weights never increase across bins.
    """

    cutpoints: tuple[float, ...]
    sided: str = "two"
    alphas: tuple[float, ...] | None = None

    def __post_init__(self):
        cps = tuple(float(c) for c in self.cutpoints)
        if not cps or any(not (0 < c < 1) for c in cps) or any(a >= b for a, b in zip(cps, cps[1:])):
            raise ValueError("cutpoints must be strictly increasing inside (0, 1)")
        object.__setattr__(self, "cutpoints", cps)
        if self.sided not in ("one", "two"):
            raise ValueError("sided must be 'one' or 'two'")
        alphas = self.alphas if self.alphas is not None else (1.0,) * (len(cps) + 1)
        alphas = tuple(float(a) for a in alphas)
        if len(alphas) != len(cps) + 1:
            raise ValueError(f"need {len(cps) + 1} concentrations, got {len(alphas)}")
        if any(a <= 0 for a in alphas):
            raise ValueError("Dirichlet concentrations must be > 0")
        object.__setattr__(self, "alphas", alphas)

    @property
    def n_bins(self) -> int:
        return len(self.cutpoints) + 1

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        eta = rng.dirichlet(self.alphas)
        omega = np.cumsum(eta[::-1])[::-1]
        omega[0] = 1.0
        return omega

    def logpdf(self, omega) -> float:
        omega = np.asarray(omega, dtype=float)
        if omega.shape != (self.n_bins,):
            raise ValueError(f"expected {self.n_bins} weights, got shape {omega.shape}")
        if abs(omega[0] - 1.0) > 1e-12 or np.any(omega < 0) or np.any(omega > 1 + 1e-12):
            return -np.inf
        eta = np.append(-np.diff(omega), omega[-1])
        if np.any(eta < 0):
            return -np.inf
        eta = np.clip(eta, 1e-300, None)
        eta = eta / eta.sum()
        return float(stats.dirichlet.logpdf(eta, self.alphas))

    def to_json(self) -> dict:
        return {"cutpoints": list(self.cutpoints), "sided": self.sided, "alphas": list(self.alphas)}

    @classmethod
    def from_json(cls, doc: dict) -> "WeightPrior":
        return cls(tuple(doc["cutpoints"]), doc.get("sided", "two"), tuple(doc["alphas"]) if doc.get("alphas") else None)


class ProfileSource(str, enum.Enum):
    DEFAULT = "default"
    MEDICINE = "medicine"
    CUSTOM = "custom"


@dataclass(frozen=True)
class PriorProfile:
    """Null/alternative prior pair for the effect and the heterogeneity.

    The alternative priors are stored in base form together with a
    multiplicative ``scale_knob``; the realized priors multiply the base
    scale by ``measure_factor * scale_knob`` on access, so rescaling composes
    exactly.  ``coefficient_scale_fraction`` sets meta-regression coefficient
    prior scales as a fraction of the realized effect scale.
    """

    effect_alt_base: Prior
    heterogeneity_alt_base: Prior
    measure_factor: float = 1.0
    scale_knob: float = 1.0
    coefficient_scale_fraction: float = 0.25
    effect_null: Prior = field(default_factory=point)
    heterogeneity_null: Prior = field(default_factory=point)
    source: ProfileSource = ProfileSource.DEFAULT
    subfield: str | None = None

    def __post_init__(self):
        if self.scale_knob <= 0 or self.measure_factor <= 0:
            raise ValueError("scale factors must be > 0")
        if not (0 < self.coefficient_scale_fraction <= 1):
            raise ValueError("coefficient_scale_fraction must lie in (0, 1]")

    @property
    def effect_alt(self) -> Prior:
        return self.effect_alt_base.scaled(self.measure_factor * self.scale_knob)

    @property
    def heterogeneity_alt(self) -> Prior:
        return self.heterogeneity_alt_base.scaled(self.measure_factor * self.scale_knob)

    @property
    def effect_scale(self) -> float:
        """Scale parameter of the realized alternative effect prior."""
        p = self.effect_alt
        if p.family in (Family.NORMAL, Family.CAUCHY):
            return p.params[1]
        if p.family is Family.UNIFORM:
            return (p.params[1] - p.params[0]) / 2.0
        raise ValueError(f"effect prior family {p.family.value} has no scale parameter")

    def coefficient_prior(self) -> Prior:
        return normal(0.0, self.coefficient_scale_fraction * self.effect_scale)

    def rescaled(self, factor: float) -> "PriorProfile":
        return replace(self, scale_knob=self.scale_knob * factor)

    def to_json(self) -> dict:
        return {
            "effect": {"null": self.effect_null.to_json(), "alt": self.effect_alt.to_json()},
            "heterogeneity": {"null": self.heterogeneity_null.to_json(), "alt": self.heterogeneity_alt.to_json()},
            "coefficient_scale_fraction": self.coefficient_scale_fraction,
            "source": self.source.value,
            "subfield": self.subfield,
        }


def default_profile(measure: Measure, scale: float = 1.0) -> PriorProfile:
    """Default prior profile for a supported effect-size measure.

    The SMD base is a standard normal on the effect and an
    Inverse-Gamma(1, 0.15) on the heterogeneity; other measures rescale that
    base by their scale factor.  ``scale`` further multiplies all scale
    parameters: values above one make the priors less informative, values
    below one more informative.
    """
    if measure not in SCALE_FACTORS:
        raise ValueError(
            f"no default prior profile for measure {measure.value!r}; use a custom profile"
        )
    if scale <= 0:
        raise ValueError("scale must be > 0")
    return PriorProfile(
        effect_alt_base=normal(0.0, 1.0),
        heterogeneity_alt_base=invgamma(1.0, 0.15),
        measure_factor=SCALE_FACTORS[measure],
        scale_knob=float(scale),
        coefficient_scale_fraction=0.25,
        source=ProfileSource.DEFAULT,
    )


def custom_profile(
    effect_alt: Prior,
    heterogeneity_alt: Prior,
    effect_null: Prior | None = None,
    heterogeneity_null: Prior | None = None,
    coefficient_scale_fraction: float = 0.25,
) -> PriorProfile:
    """Fully user-specified prior profile, stored at unit knob."""
    return PriorProfile(
        effect_alt_base=effect_alt,
        heterogeneity_alt_base=heterogeneity_alt,
        effect_null=effect_null if effect_null is not None else point(),
        heterogeneity_null=heterogeneity_null if heterogeneity_null is not None else point(),
        coefficient_scale_fraction=coefficient_scale_fraction,
        source=ProfileSource.CUSTOM,
    )


def _load_catalog() -> list[dict]:
    text = resources.files("bmameta").joinpath("catalog/medicine_priors.json").read_text("utf-8")
    return json.loads(text)["entries"]


def medicine_subfields(measure: Measure | None = None) -> list[str]:
    entries = _load_catalog()
    if measure is not None:
        entries = [e for e in entries if e["measure"] == measure.value]
    return sorted({e["subfield"] for e in entries})


def medicine_profile(measure: Measure, subfield: str, scale: float = 1.0) -> PriorProfile:
    """Empirical prior profile from the bundled medicine catalog.

    Catalog entries are data, not code: they ship in
    ``bmameta/catalog/medicine_priors.json`` with per-entry provenance notes.
    Coefficient priors use one half of the effect scale (the empirical
    profiles are narrower than the defaults).
    """
    for entry in _load_catalog():
        if entry["measure"] == measure.value and entry["subfield"].lower() == subfield.lower():
            return PriorProfile(
                effect_alt_base=Prior.from_json(entry["effect"]),
                heterogeneity_alt_base=Prior.from_json(entry["heterogeneity"]),
                measure_factor=1.0,
                scale_knob=float(scale),
                coefficient_scale_fraction=0.5,
                source=ProfileSource.MEDICINE,
                subfield=entry["subfield"],
            )
    available = ", ".join(f"{m}:{s}" for m, s in sorted({(e['measure'], e['subfield']) for e in _load_catalog()}))
    raise KeyError(f"no catalog entry for ({measure.value}, {subfield!r}); available: {available}")
