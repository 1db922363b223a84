"""Model log-likelihoods: random effects, meta-regression means, multilevel
clustering, PET/PEESE mean adjustment, and selection-model weighting.

All evaluations are pure functions of ``(parameters, context)``; the context
pre-computes whatever depends only on the data (cluster blocks, selection
thresholds, observed p-value bins) so the per-iteration kernels stay lean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import _kernels
from .data import Dataset
from .modelspace import BiasVariant, DesignMatrix, ModelSpec

GH_POINTS = 21


@dataclass(frozen=True)
class ParameterVector:
    """Parameter values for one model evaluation.

    Only parameters the model activates matter; the rest keep their neutral
    defaults (zero effects and slopes, unit weights).  ``beta`` spans all
    design columns with exact zeros for excluded terms.
    """

    mu: float = 0.0
    tau: float = 0.0
    rho: float = 0.0
    beta: np.ndarray | None = None
    omega: np.ndarray | None = None
    pet: float = 0.0
    peese: float = 0.0


class SelectionPlan:
    """Data-dependent pieces of a selection likelihood.

    ``thresholds[i, j]`` is the y-scale cutoff for study ``i`` at p-value
    cutpoint ``j`` (decreasing across ``j``); ``obs_bin[i]`` is the bin the
    study's observed p-value falls into.
    """

    def __init__(self, se: np.ndarray, cutpoints: tuple[float, ...], sided: str, y: np.ndarray):
        alphas = np.asarray(cutpoints, dtype=float)
        if sided == "one":
            z = ndtri(1.0 - alphas)
        else:
            z = ndtri(1.0 - alphas / 2.0)
        self.two_sided = sided == "two"
        self.thresholds = np.ascontiguousarray(np.outer(se, z))
        p = pvalue(y, se, sided)
        self.obs_bin = np.ascontiguousarray(np.searchsorted(alphas, p, side="right").astype(np.int64))


def pvalue(y, se, sided: str = "two"):
    """P-value of ``y / se`` against a standard normal.

    One-sided p-values are taken in the direction of positive effects:
    ``p = 1 - Phi(y / se)``; two-sided ``p = 2 (1 - Phi(|y| / se))``.
    """
    z = np.asarray(y, dtype=float) / np.asarray(se, dtype=float)
    if sided == "one":
        out = ndtr(-z)
    elif sided == "two":
        out = 2.0 * ndtr(-np.abs(z))
    else:
        raise ValueError("sided must be 'one' or 'two'")
    return float(out) if out.ndim == 0 else out


class LikelihoodContext:
    """Dataset views prepared for likelihood evaluation.

    Records are re-ordered so clusters are contiguous; the mapping is kept so
    design rows follow along.  Selection plans are cached per (cutpoints,
    sided) pair.
    """

    def __init__(self, data: Dataset, design: DesignMatrix | None = None):
        self.data = data
        self.design = design
        y = data.y
        se = data.se
        X = design.matrix if design is not None else np.zeros((len(data), 0))
        if X.shape[0] != len(data):
            raise ValueError("design row count does not match dataset")
        clusters = data.clusters
        if clusters is not None:
            codes_map: dict[str, int] = {}
            codes = np.array([codes_map.setdefault(c, len(codes_map)) for c in clusters])
            order = np.argsort(codes, kind="stable")
            self.cluster_order = order
            sorted_codes = codes[order]
            uniq, starts, lens = np.unique(sorted_codes, return_index=True, return_counts=True)
            self.cluster_starts = np.ascontiguousarray(starts.astype(np.int64))
            self.cluster_lens = np.ascontiguousarray(lens.astype(np.int64))
        else:
            self.cluster_order = np.arange(len(data))
            self.cluster_starts = None
            self.cluster_lens = None
        self.y = np.ascontiguousarray(y[self.cluster_order])
        self.se = np.ascontiguousarray(se[self.cluster_order])
        self.se2 = np.ascontiguousarray(self.se**2)
        self.X = np.ascontiguousarray(X[self.cluster_order])
        gh_x, gh_w = np.polynomial.hermite.hermgauss(GH_POINTS)
        self.gh_x = np.ascontiguousarray(gh_x)
        self.gh_w = np.ascontiguousarray(gh_w)
        self._plans: dict[tuple, SelectionPlan] = {}

    @property
    def n(self) -> int:
        return len(self.data)

    @property
    def has_clusters(self) -> bool:
        return self.cluster_starts is not None

    def selection_plan(self, bias: BiasVariant) -> SelectionPlan:
        wp = bias.weight_prior
        key = (wp.cutpoints, wp.sided)
        if key not in self._plans:
            self._plans[key] = SelectionPlan(self.se, wp.cutpoints, wp.sided, self.y)
        return self._plans[key]

    def mean_vector(self, theta: ParameterVector) -> np.ndarray:
        m = np.full(self.n, theta.mu)
        if theta.beta is not None and self.X.shape[1]:
            m = m + self.X @ theta.beta
        if theta.pet:
            m = m + theta.pet * self.se
        if theta.peese:
            m = m + theta.peese * self.se2
        return np.ascontiguousarray(m)


def loglik(spec: ModelSpec, theta: ParameterVector, ctx: LikelihoodContext) -> float:
    """Log-likelihood of ``theta`` under the model described by ``spec``."""
    m = ctx.mean_vector(theta)
    tau2 = theta.tau * theta.tau
    multilevel = spec.multilevel and ctx.has_clusters
    if spec.bias.kind == "selection":
        plan = ctx.selection_plan(spec.bias)
        omega = np.ascontiguousarray(np.asarray(theta.omega, dtype=float))
        if multilevel:
            return _kernels.selection_clustered_loglik(
                ctx.y, ctx.se2, m, tau2, theta.rho, omega,
                plan.thresholds, plan.obs_bin, plan.two_sided,
                ctx.cluster_starts, ctx.cluster_lens, ctx.gh_x, ctx.gh_w,
            )
        return _kernels.selection_loglik(
            ctx.y, ctx.se2, m, tau2, omega, plan.thresholds, plan.obs_bin, plan.two_sided
        )
    if multilevel:
        return _kernels.clustered_loglik(
            ctx.y, ctx.se2, m, tau2, theta.rho, ctx.cluster_starts, ctx.cluster_lens
        )
    return _kernels.normal_loglik(ctx.y, ctx.se2, m, tau2)
