"""Model fitting: MCMC sampling, marginal likelihoods, convergence diagnostics."""

from .diagnostics import Diag, diagnose, ess, mcse, rhat
from .marglik import MarginalLikelihoodError, MarglikResult, bridge_logml, quadrature_logml
from .mcmc import (
    DEFAULT_TARGET_ESS,
    AutofitSettings,
    FitResult,
    McmcSettings,
    PosteriorDraws,
    autofit,
    fit_model,
    log_marginal_likelihood,
)
from .program import ModelProgram

__all__ = [
    "AutofitSettings",
    "DEFAULT_TARGET_ESS",
    "Diag",
    "FitResult",
    "MarginalLikelihoodError",
    "MarglikResult",
    "McmcSettings",
    "ModelProgram",
    "PosteriorDraws",
    "autofit",
    "bridge_logml",
    "diagnose",
    "ess",
    "fit_model",
    "log_marginal_likelihood",
    "mcse",
    "quadrature_logml",
    "rhat",
]
