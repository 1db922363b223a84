"""Unconstrained reparameterization of a model for sampling and integration.

Each free parameter is mapped to the real line (log for half-open supports,
logit for intervals, stick-breaking for selection weights); the program
exposes the joint log-posterior in unconstrained coordinates plus the
prior-CDF map from the unit cube used by the quadrature marginal-likelihood
route.  Scalar-prior evaluations go through precompiled closures because the
sampler calls them millions of times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaincinv, gammaln

from .. import _kernels
from ..likelihood import LikelihoodContext, ParameterVector, loglik
from ..modelspace import ModelSpec
from ..priors import Family, Prior, WeightPrior, scalar_logpdf, scalar_ppf


def _expit(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _log_expit(z: float) -> float:
    if z >= 0:
        return -math.log1p(math.exp(-z))
    return z - math.log1p(math.exp(z))


def _logit(p: float) -> float:
    p = min(max(p, 1e-15), 1.0 - 1e-15)
    return math.log(p / (1.0 - p))


class ScalarSite:
    """One free scalar parameter with a support-matched bijection."""

    n_unc = 1

    def __init__(self, name: str, prior: Prior):
        self.name = name
        self.prior = prior
        self._logpdf = scalar_logpdf(prior)
        self._ppf = scalar_ppf(prior)
        lo, hi = prior.support()
        self.lo, self.hi = lo, hi
        if math.isinf(lo) and math.isinf(hi):
            self.kind = "identity"
        elif math.isinf(hi):
            self.kind = "log"
        elif math.isinf(lo):
            self.kind = "neglog"
        else:
            self.kind = "logit"

    def constrain(self, z: float) -> float:
        if self.kind == "identity":
            return z
        if self.kind == "log":
            return self.lo + math.exp(z)
        if self.kind == "neglog":
            return self.hi - math.exp(z)
        return self.lo + (self.hi - self.lo) * _expit(z)

    def unconstrain(self, x: float) -> float:
        if self.kind == "identity":
            return x
        if self.kind == "log":
            return math.log(max(x - self.lo, 1e-300))
        if self.kind == "neglog":
            return math.log(max(self.hi - x, 1e-300))
        return _logit((x - self.lo) / (self.hi - self.lo))

    def logprior_unc(self, z: float) -> float:
        x = self.constrain(z)
        lp = self._logpdf(x)
        if self.kind in ("log", "neglog"):
            return lp + z
        if self.kind == "logit":
            return lp + math.log(self.hi - self.lo) + _log_expit(z) + _log_expit(-z)
        return lp

    def sample_unc(self, rng: np.random.Generator) -> float:
        u = min(max(rng.random(), 1e-12), 1.0 - 1e-12)
        return self.unconstrain(self._ppf(u))

    def from_unit(self, u: np.ndarray) -> float:
        q = min(max(float(u[0]), 1e-15), 1.0 - 1e-15)
        return self._ppf(q)

    def labels(self):
        return [self.name]

    def constrained_values(self, z: np.ndarray):
        return [self.constrain(float(z[0]))]


class OmegaSite:
    """Selection weights via stick-breaking of the Dirichlet increments."""

    def __init__(self, weight_prior: WeightPrior):
        self.wp = weight_prior
        self.n_bins = weight_prior.n_bins
        self.n_unc = self.n_bins - 1
        self.alphas = np.asarray(weight_prior.alphas, dtype=float)
        # stick-breaking betas: eta_b | rest ~ Beta(alpha_b, sum(alpha_{b+1:}))
        self.beta_a = self.alphas[:-1]
        self.beta_b = np.cumsum(self.alphas[::-1])[::-1][1:]
        self._alpha_m1 = self.alphas - 1.0
        self._dir_lognorm = float(gammaln(self.alphas.sum()) - gammaln(self.alphas).sum())

    def _eta(self, z: np.ndarray) -> tuple[np.ndarray, float]:
        """Increments plus the stick-breaking log-Jacobian."""
        eta = np.empty(self.n_bins)
        rem = 1.0
        logj = 0.0
        for b in range(self.n_unc):
            zb = float(z[b])
            v = _expit(zb)
            eta[b] = rem * v
            logj += math.log(max(rem, 1e-300)) + _log_expit(zb) + _log_expit(-zb)
            rem *= 1.0 - v
        eta[-1] = rem
        return eta, logj

    def constrain(self, z: np.ndarray) -> np.ndarray:
        eta, _ = self._eta(z)
        omega = np.cumsum(eta[::-1])[::-1]
        omega[0] = 1.0
        return omega

    def logprior_unc(self, z: np.ndarray) -> float:
        eta, logj = self._eta(z)
        acc = self._dir_lognorm + logj
        for b in range(self.n_bins):
            a = self._alpha_m1[b]
            if a != 0.0:
                acc += a * math.log(max(eta[b], 1e-300))
        return acc

    def sample_unc(self, rng: np.random.Generator) -> np.ndarray:
        eta = rng.dirichlet(self.alphas)
        return self._sticks(eta)

    def _sticks(self, eta: np.ndarray) -> np.ndarray:
        z = np.empty(self.n_unc)
        rem = 1.0
        for b in range(self.n_unc):
            v = eta[b] / max(rem, 1e-300)
            z[b] = _logit(v)
            rem *= 1.0 - min(max(v, 1e-15), 1.0 - 1e-15)
        return z

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        eta = np.empty(self.n_bins)
        rem = 1.0
        for b in range(self.n_unc):
            q = min(max(float(u[b]), 1e-15), 1.0 - 1e-15)
            v = float(betaincinv(self.beta_a[b], self.beta_b[b], q))
            eta[b] = rem * v
            rem *= 1.0 - v
        eta[-1] = rem
        omega = np.cumsum(eta[::-1])[::-1]
        omega[0] = 1.0
        return omega

    def labels(self):
        return [f"omega[{b}]" for b in range(2, self.n_bins + 1)]

    def constrained_values(self, z: np.ndarray):
        return list(self.constrain(z)[1:])


class ModelProgram:
    """Callable view of one model: log-posterior in unconstrained coordinates."""

    def __init__(self, spec: ModelSpec, ctx: LikelihoodContext):
        self.spec = spec
        self.ctx = ctx
        self.sites: list = []
        self._fixed: dict[str, float] = {}
        n_cols = ctx.X.shape[1]
        self._n_design_cols = n_cols

        def add_scalar(name: str, prior: Prior):
            if prior.is_point:
                self._fixed[name] = prior.params[0]
            else:
                self.sites.append(ScalarSite(name, prior))

        add_scalar("mu", spec.priors["mu"])
        for key, prior in spec.priors.items():
            if key.startswith("beta:"):
                self.sites.append(ScalarSite(key, prior))
        add_scalar("tau", spec.priors["tau"])
        if "rho" in spec.priors:
            add_scalar("rho", spec.priors["rho"])
        if "omega" in spec.priors:
            self.sites.append(OmegaSite(spec.priors["omega"]))
        for slope in ("pet", "peese"):
            if slope in spec.priors:
                add_scalar(slope, spec.priors[slope])

        self._offsets = []
        off = 0
        for s in self.sites:
            self._offsets.append((off, off + s.n_unc))
            off += s.n_unc
        self.n_unc = off
        self.param_labels: list[str] = []
        for s in self.sites:
            self.param_labels.extend(s.labels())
        # dispatch plan: (kind, site, lo, hi, extra) resolved once
        self._plan = []
        for s, (a, b) in zip(self.sites, self._offsets):
            if isinstance(s, OmegaSite):
                self._plan.append(("omega", s, a, b))
            elif s.name.startswith("beta:"):
                self._plan.append(("beta", s, a, int(s.name.rsplit(":", 1)[1])))
            else:
                self._plan.append((s.name, s, a, -1))

    def _values(self, z: np.ndarray, use_unit: bool = False) -> dict:
        values: dict = dict(self._fixed)
        beta = np.zeros(self._n_design_cols) if self._n_design_cols else None
        for kind, s, a, extra in self._plan:
            if kind == "omega":
                values["omega"] = s.from_unit(z[a:extra]) if use_unit else s.constrain(z[a:extra])
            elif kind == "beta":
                beta[extra] = s.from_unit(z[a : a + 1]) if use_unit else s.constrain(float(z[a]))
            else:
                values[kind] = s.from_unit(z[a : a + 1]) if use_unit else s.constrain(float(z[a]))
        if beta is not None:
            values["beta"] = beta
        return values

    def _theta_from_values(self, v: dict) -> ParameterVector:
        return ParameterVector(
            mu=v.get("mu", 0.0),
            tau=v.get("tau", 0.0),
            rho=v.get("rho", 0.0),
            beta=v.get("beta"),
            omega=v.get("omega"),
            pet=v.get("pet", 0.0),
            peese=v.get("peese", 0.0),
        )

    def theta(self, z: np.ndarray) -> ParameterVector:
        return self._theta_from_values(self._values(z))

    def theta_from_unit(self, u: np.ndarray) -> ParameterVector:
        """Map unit-cube coordinates through the prior CDFs (for quadrature)."""
        return self._theta_from_values(self._values(u, use_unit=True))

    def site_logprior(self, site_idx: int, z: np.ndarray) -> float:
        s = self.sites[site_idx]
        a, b = self._offsets[site_idx]
        if isinstance(s, OmegaSite):
            return s.logprior_unc(z[a:b])
        return s.logprior_unc(float(z[a]))

    def logprior_unc(self, z: np.ndarray) -> float:
        return sum(self.site_logprior(i, z) for i in range(len(self.sites)))

    def loglik_unc(self, z: np.ndarray) -> float:
        return loglik(self.spec, self.theta(z), self.ctx)

    def logpost_unc(self, z: np.ndarray) -> float:
        lp = self.logprior_unc(z)
        if not math.isfinite(lp):
            return -math.inf
        return lp + self.loglik_unc(z)

    def sample_unc(self, rng: np.random.Generator) -> np.ndarray:
        z = np.empty(self.n_unc)
        for s, (a, b) in zip(self.sites, self._offsets):
            z[a:b] = s.sample_unc(rng)
        return z

    def loglik_unit(self, u: np.ndarray) -> float:
        return loglik(self.spec, self.theta_from_unit(u), self.ctx)

    def mu_collapse_info(self) -> tuple[float, float] | None:
        """(mu0, s0) when the location can be integrated out analytically.

        Possible when the effect parameter is free with an untruncated normal
        prior and the likelihood stays Gaussian in it (anything but a
        selection model).
        """
        prior = self.spec.priors["mu"]
        if prior.is_point or prior.family is not Family.NORMAL or prior.truncation is not None:
            return None
        if self.spec.bias.kind == "selection":
            return None
        return prior.params

    def loglik_unit_nomu(self, u_rest: np.ndarray) -> float:
        """Likelihood integrated over the effect prior, on the reduced cube.

        ``u_rest`` covers every free coordinate except the effect parameter,
        in site order.
        """
        mu0, s0 = self.mu_collapse_info()
        u = np.empty(self.n_unc)
        pos = 0
        mu_slot = None
        for s, (a, b) in zip(self.sites, self._offsets):
            if isinstance(s, ScalarSite) and s.name == "mu":
                mu_slot = (a, b)
                u[a:b] = 0.5
                continue
            u[a:b] = u_rest[pos : pos + (b - a)]
            pos += b - a
        theta = self.theta_from_unit(u)
        theta = ParameterVector(
            mu=0.0, tau=theta.tau, rho=theta.rho, beta=theta.beta,
            omega=theta.omega, pet=theta.pet, peese=theta.peese,
        )
        m_off = self.ctx.mean_vector(theta)
        tau2 = theta.tau * theta.tau
        if self.spec.multilevel and self.ctx.has_clusters:
            return _kernels.clustered_loglik_mu_marginal(
                self.ctx.y, self.ctx.se2, m_off, tau2, theta.rho, mu0, s0,
                self.ctx.cluster_starts, self.ctx.cluster_lens,
            )
        return _kernels.normal_loglik_mu_marginal(self.ctx.y, self.ctx.se2, m_off, tau2, mu0, s0)

    def constrained(self, z: np.ndarray) -> np.ndarray:
        out = []
        for s, (a, b) in zip(self.sites, self._offsets):
            out.extend(s.constrained_values(z[a:b]))
        return np.asarray(out)

    def fixed_loglik(self) -> float:
        """Log-likelihood of a model without free parameters."""
        if self.n_unc:
            raise ValueError("model has free parameters")
        return self.loglik_unc(np.empty(0))
