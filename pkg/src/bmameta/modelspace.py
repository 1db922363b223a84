"""Model-space construction: candidate models, prior probabilities, designs.

The ensemble is the cross product of component states (effect present or
absent, heterogeneity present or absent, one of the publication-bias
variants, per-moderator inclusion), each state carrying the prior it implies
for the parameters it activates.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import CovariateKind, Dataset
from .priors import Prior, PriorProfile, WeightPrior, cauchy, point


class BiasFamily(str, enum.Enum):
    PSMA = "PSMA"
    PP = "PP"
    TWOW = "TwoW"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class BiasVariant:
    """One publication-bias adjustment: none, a selection model, PET, or PEESE."""

    kind: str  # "none" | "selection" | "pet" | "peese"
    weight_prior: WeightPrior | None = None
    slope_prior: Prior | None = None

    def __post_init__(self):
        if self.kind not in ("none", "selection", "pet", "peese"):
            raise ValueError(f"unknown bias kind {self.kind!r}")
        if self.kind == "selection" and self.weight_prior is None:
            raise ValueError("selection variant needs a weight prior")
        if self.kind in ("pet", "peese"):
            if self.slope_prior is None:
                raise ValueError(f"{self.kind} variant needs a slope prior")
            lo, _ = self.slope_prior.support()
            if lo < 0:
                raise ValueError(f"{self.kind} slope prior must be restricted to nonnegative slopes")

    @property
    def label(self) -> str:
        if self.kind == "none":
            return "none"
        if self.kind == "selection":
            wp = self.weight_prior
            cps = ",".join(f"{c:g}" for c in wp.cutpoints)
            return f"selection[{wp.sided}-sided:{cps}]"
        return self.kind

    def to_json(self) -> dict:
        doc: dict = {"kind": self.kind}
        if self.weight_prior is not None:
            doc["weight_prior"] = self.weight_prior.to_json()
        if self.slope_prior is not None:
            doc["slope_prior"] = self.slope_prior.to_json()
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "BiasVariant":
        return cls(
            kind=doc["kind"],
            weight_prior=WeightPrior.from_json(doc["weight_prior"]) if doc.get("weight_prior") else None,
            slope_prior=Prior.from_json(doc["slope_prior"]) if doc.get("slope_prior") else None,
        )


def no_bias() -> BiasVariant:
    return BiasVariant("none")


def default_pet_prior() -> Prior:
    return cauchy(0.0, 1.0, truncation=(0.0, math.inf))


def default_peese_prior() -> Prior:
    return cauchy(0.0, 5.0, truncation=(0.0, math.inf))


# Selection variants averaged over by the PSMA ensemble, ordered as
# (sidedness, cutpoints); each uses a unit-concentration cumulative
# Dirichlet weight prior.
PSMA_SELECTION_STEPS: tuple[tuple[str, tuple[float, ...]], ...] = (
    ("two", (0.05,)),
    ("two", (0.05, 0.10)),
    ("one", (0.05,)),
    ("one", (0.025, 0.05)),
    ("one", (0.05, 0.50)),
    ("one", (0.025, 0.05, 0.50)),
)

TWOW_SELECTION_STEPS: tuple[tuple[str, tuple[float, ...]], ...] = (
    ("two", (0.05,)),
    ("two", (0.05, 0.10)),
)


def _selection_variant(sided: str, cutpoints: tuple[float, ...]) -> BiasVariant:
    return BiasVariant("selection", weight_prior=WeightPrior(cutpoints, sided))


def bias_states(family: BiasFamily, custom: Sequence[tuple[BiasVariant, float]] | None = None):
    """Bias states with their relative prior weights within the bias-present half.

    Returns a list of ``(variant, weight)`` pairs excluding the no-bias state;
    weights sum to 1.
    """
    if family is BiasFamily.PSMA:
        sel = [( _selection_variant(s, c), 0.5 / len(PSMA_SELECTION_STEPS)) for s, c in PSMA_SELECTION_STEPS]
        pp = [
            (BiasVariant("pet", slope_prior=default_pet_prior()), 0.25),
            (BiasVariant("peese", slope_prior=default_peese_prior()), 0.25),
        ]
        return sel + pp
    if family is BiasFamily.PP:
        return [
            (BiasVariant("pet", slope_prior=default_pet_prior()), 0.5),
            (BiasVariant("peese", slope_prior=default_peese_prior()), 0.5),
        ]
    if family is BiasFamily.TWOW:
        return [(_selection_variant(s, c), 0.5) for s, c in TWOW_SELECTION_STEPS]
    if family is BiasFamily.CUSTOM:
        if not custom:
            raise ValueError("custom bias family needs explicit (variant, weight) pairs")
        total = sum(w for _, w in custom)
        return [(v, w / total) for v, w in custom]
    raise ValueError(f"unknown bias family {family!r}")


def orthonormal_contrasts(k: int) -> np.ndarray:
    """Orthonormal contrast matrix for a factor with ``k`` levels.

    Columns form an orthonormal basis of the subspace orthogonal to the
    constant vector, so ``C.T @ C = I`` and ``C.T @ 1 = 0``; consequently
    ``C @ C.T = I - J/k`` and the implied level effects are exchangeable and
    sum to zero.  Column signs are fixed so the first nonzero entry of each
    column is positive.
    """
    if not (isinstance(k, (int, np.integer)) and k >= 2):
        raise ValueError(f"need an integer k >= 2, got {k!r}")
    base = np.column_stack([np.full(k, 1.0 / math.sqrt(k)), np.eye(k)[:, : k - 1]])
    q, _ = np.linalg.qr(base)
    contrasts = q[:, 1:]
    for j in range(k - 1):
        col = contrasts[:, j]
        lead = col[np.nonzero(np.abs(col) > 1e-12)[0][0]]
        if lead < 0:
            contrasts[:, j] = -col
    return contrasts


@dataclass(frozen=True)
class TermBlock:
    """Columns contributed by one moderator term."""

    name: str
    kind: CovariateKind
    columns: tuple[int, ...]  # indices into the design matrix
    levels: tuple[str, ...] = ()  # categorical only
    contrasts: np.ndarray | None = None  # categorical: (k, k-1)
    center: float = 0.0  # continuous: training mean
    spread: float = 1.0  # continuous: training sd (population convention)

    def row(self, value) -> np.ndarray:
        """Design row fragment for a covariate value on the model scale."""
        if self.kind is CovariateKind.CATEGORICAL:
            if value not in self.levels:
                raise ValueError(f"unknown level {value!r} for term {self.name!r}")
            return self.contrasts[self.levels.index(value)]
        return np.array([(float(value) - self.center) / self.spread])


@dataclass(frozen=True)
class DesignMatrix:
    """Centered moderator design (no intercept column; the intercept is mu)."""

    matrix: np.ndarray  # (n, p)
    terms: tuple[TermBlock, ...]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    def term(self, name: str) -> TermBlock:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(f"term {name!r} not in design")


def build_design(data: Dataset, terms: Sequence[str]) -> DesignMatrix:
    """Build the moderator design: orthonormal contrasts for factors,
    standardized columns for continuous covariates.

    Standardization stores the training mean and population-sd so design rows
    for new covariate values can be produced later.  A constant continuous
    covariate is rejected.
    """
    blocks = []
    columns = []
    next_col = 0
    for name in terms:
        if name not in data.covariate_kinds:
            raise ValueError(f"moderator {name!r} is not a covariate of the dataset")
        kind = data.covariate_kinds[name]
        if kind is CovariateKind.CATEGORICAL:
            levels = data.covariate_levels(name)
            if len(levels) < 2:
                raise ValueError(f"categorical moderator {name!r} needs >= 2 observed levels")
            contrasts = orthonormal_contrasts(len(levels))
            idx = [levels.index(str(r.covariates[name])) for r in data.records]
            block_cols = contrasts[idx, :]
            cols = tuple(range(next_col, next_col + len(levels) - 1))
            blocks.append(TermBlock(name=name, kind=kind, columns=cols, levels=levels, contrasts=contrasts))
        else:
            values = np.array([float(r.covariates[name]) for r in data.records])
            sd = float(values.std())  # population convention (divisor n)
            if sd == 0:
                raise ValueError(f"continuous moderator {name!r} is constant")
            mean = float(values.mean())
            block_cols = ((values - mean) / sd)[:, None]
            cols = (next_col,)
            blocks.append(TermBlock(name=name, kind=kind, columns=cols, center=mean, spread=sd))
        columns.append(block_cols)
        next_col += block_cols.shape[1]
    matrix = np.hstack(columns) if columns else np.zeros((len(data), 0))
    return DesignMatrix(matrix=matrix, terms=tuple(blocks))


@dataclass(frozen=True)
class ModelSpec:
    """One fully specified candidate model."""

    effect: bool
    heterogeneity: bool
    bias: BiasVariant = field(default_factory=no_bias)
    moderators: tuple[str, ...] = ()  # included terms
    multilevel: bool = False
    priors: Mapping[str, Prior | WeightPrior] = field(default_factory=dict)
    prior_prob: float = 1.0

    def __post_init__(self):
        if not self.prior_prob > 0:
            raise ValueError("prior_prob must be > 0")

    @property
    def label(self) -> str:
        bits = [
            "effect" if self.effect else "null-effect",
            "heterogeneity" if self.heterogeneity else "null-heterogeneity",
        ]
        if self.bias.kind != "none":
            bits.append(self.bias.label)
        bits.extend(f"+{m}" for m in self.moderators)
        if self.multilevel:
            bits.append("multilevel")
        return " ".join(bits)

    def to_json(self) -> dict:
        priors = {}
        for name, p in self.priors.items():
            priors[name] = p.to_json()
        return {
            "effect": self.effect,
            "heterogeneity": self.heterogeneity,
            "bias": self.bias.to_json(),
            "moderators": list(self.moderators),
            "multilevel": self.multilevel,
            "prior_prob": self.prior_prob,
            "priors": priors,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ModelSpec":
        priors: dict = {}
        for name, p in doc.get("priors", {}).items():
            priors[name] = WeightPrior.from_json(p) if name == "omega" else Prior.from_json(p)
        return cls(
            effect=doc["effect"],
            heterogeneity=doc["heterogeneity"],
            bias=BiasVariant.from_json(doc["bias"]),
            moderators=tuple(doc.get("moderators", ())),
            multilevel=doc.get("multilevel", False),
            priors=priors,
            prior_prob=doc["prior_prob"],
        )


@dataclass(frozen=True)
class Ensemble:
    """All candidate models with their prior probabilities."""

    models: tuple[ModelSpec, ...]
    moderator_terms: tuple[str, ...] = ()

    def __post_init__(self):
        total = sum(m.prior_prob for m in self.models)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"prior model probabilities sum to {total!r}, not 1")

    def __len__(self):
        return len(self.models)

    def component_indicator(self, component: str) -> np.ndarray:
        """Boolean inclusion indicator of a component across models.

        Components: ``"effect"``, ``"heterogeneity"``, ``"bias"`` or
        ``"moderator:<term>"``.
        """
        if component == "effect":
            return np.array([m.effect for m in self.models])
        if component == "heterogeneity":
            return np.array([m.heterogeneity for m in self.models])
        if component == "bias":
            return np.array([m.bias.kind != "none" for m in self.models])
        if component.startswith("moderator:"):
            term = component.split(":", 1)[1]
            if term not in self.moderator_terms:
                raise KeyError(f"unknown moderator term {term!r}")
            return np.array([term in m.moderators for m in self.models])
        raise KeyError(f"unknown component {component!r}")

    def components(self) -> list[str]:
        out = ["effect", "heterogeneity"]
        if any(m.bias.kind != "none" for m in self.models):
            out.append("bias")
        out.extend(f"moderator:{t}" for t in self.moderator_terms)
        return out

    def component_prior_prob(self, component: str) -> float:
        ind = self.component_indicator(component)
        return float(sum(m.prior_prob for m, inc in zip(self.models, ind) if inc))

    def to_json(self) -> dict:
        return {
            "moderator_terms": list(self.moderator_terms),
            "models": [m.to_json() for m in self.models],
            "component_prior_probs": {c: self.component_prior_prob(c) for c in self.components()},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Ensemble":
        return cls(
            models=tuple(ModelSpec.from_json(m) for m in doc["models"]),
            moderator_terms=tuple(doc.get("moderator_terms", ())),
        )


def _model_priors(
    profile: PriorProfile,
    effect: bool,
    heterogeneity: bool,
    bias: BiasVariant,
    included_terms: Sequence[str],
    design: DesignMatrix | None,
    multilevel: bool,
) -> dict:
    priors: dict = {
        "mu": profile.effect_alt if effect else profile.effect_null,
        "tau": profile.heterogeneity_alt if heterogeneity else profile.heterogeneity_null,
    }
    if multilevel and heterogeneity:
        # cluster share of the total heterogeneity variance
        priors["rho"] = Prior.from_json({"family": "uniform", "params": [0.0, 1.0]})
    if design is not None:
        coef = profile.coefficient_prior()
        for term in included_terms:
            block = design.term(term)
            for col in block.columns:
                priors[f"beta:{term}:{col}"] = coef
    if bias.kind == "selection":
        priors["omega"] = bias.weight_prior
    elif bias.kind == "pet":
        priors["pet"] = bias.slope_prior
    elif bias.kind == "peese":
        priors["peese"] = bias.slope_prior
    return priors


def build_ensemble(
    profile: PriorProfile,
    effect_bma: bool = True,
    heterogeneity_bma: bool = True,
    bias_bma: bool = False,
    bias_family: BiasFamily = BiasFamily.PSMA,
    custom_bias: Sequence[tuple[BiasVariant, float]] | None = None,
    moderators: Sequence[str] = (),
    moderator_bma: bool = True,
    design: DesignMatrix | None = None,
    multilevel: bool = False,
    dataset: Dataset | None = None,
) -> Ensemble:
    """Cross the component switches into the full model ensemble.

    Every averaged binary component splits its prior mass 50/50.  With bias
    averaging on, the bias-present half is divided between the family's
    selection variants and PET/PEESE according to :func:`bias_states`.
    Moderator terms are averaged independently of everything else when
    ``moderator_bma`` is set, otherwise they are always included.
    """
    if moderators and design is None:
        raise ValueError("moderators given without a design matrix")
    if dataset is not None:
        if multilevel and dataset.clusters is None:
            raise ValueError("multilevel analysis requires a cluster column")
        for term in moderators:
            if term not in dataset.covariate_kinds:
                raise ValueError(f"moderator {term!r} is not a covariate of the dataset")

    effect_states = [(True, 0.5), (False, 0.5)] if effect_bma else [(True, 1.0)]
    het_states = [(True, 0.5), (False, 0.5)] if heterogeneity_bma else [(True, 1.0)]
    if bias_bma:
        bias_opts = [(no_bias(), 0.5)] + [(v, 0.5 * w) for v, w in bias_states(bias_family, custom_bias)]
    else:
        bias_opts = [(no_bias(), 1.0)]

    mod_combos: list[tuple[tuple[str, ...], float]] = [((), 1.0)]
    if moderators:
        mod_combos = [(tuple(), 1.0)]
        for term in moderators:
            new: list[tuple[tuple[str, ...], float]] = []
            states = [(True, 0.5), (False, 0.5)] if moderator_bma else [(True, 1.0)]
            for included, prob in mod_combos:
                for on, p in states:
                    new.append((included + (term,) if on else included, prob * p))
            mod_combos = new

    models = []
    for eff, p_eff in effect_states:
        for het, p_het in het_states:
            for bias, p_bias in bias_opts:
                for included, p_mod in mod_combos:
                    priors = _model_priors(profile, eff, het, bias, included, design, multilevel)
                    models.append(
                        ModelSpec(
                            effect=eff,
                            heterogeneity=het,
                            bias=bias,
                            moderators=included,
                            multilevel=multilevel,
                            priors=priors,
                            prior_prob=p_eff * p_het * p_bias * p_mod,
                        )
                    )
    return Ensemble(models=tuple(models), moderator_terms=tuple(moderators))


def save_ensemble_spec(ensemble: Ensemble, path) -> None:
    """Write the model-specification document (models, priors, prior mass)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(ensemble.to_json(), fh, indent=1, sort_keys=True)
