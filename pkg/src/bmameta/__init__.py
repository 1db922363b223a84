"""Bayesian model-averaged meta-analysis.

Estimation, hypothesis testing via inclusion Bayes factors, meta-regression
with orthonormal contrasts, multilevel models, and publication-bias
adjustment (selection models and PET/PEESE), combined by model averaging.
"""

from . import averaging, data, inference, likelihood, modelspace, priors, reporting
from ._kernels import backend_name
from .averaging import (
    ComponentTest,
    EnsembleSummary,
    averaged_draws,
    estimated_marginal_means,
    i_squared,
    inclusion_bf,
    posterior_model_probs,
    prediction_interval,
    savage_dickey_bf,
    summarize,
)
from .data import (
    Dataset,
    Measure,
    StudyRecord,
    Transform,
    apply_transform,
    fishers_z,
    load_csv,
    logor_from_ci,
)
from .inference import (
    AutofitSettings,
    FitResult,
    McmcSettings,
    autofit,
    fit_model,
    log_marginal_likelihood,
)
from .likelihood import LikelihoodContext, ParameterVector, loglik, pvalue
from .modelspace import (
    BiasFamily,
    BiasVariant,
    DesignMatrix,
    Ensemble,
    ModelSpec,
    build_design,
    build_ensemble,
    orthonormal_contrasts,
)
from .priors import (
    Prior,
    PriorProfile,
    WeightPrior,
    custom_profile,
    default_profile,
    medicine_profile,
    medicine_subfields,
)

__version__ = "0.1.0"
