"""Bipartite ranking with exponentially tilted posteriors on AUC risk.

Score functions (linear or Gaussian-process) are fit by reweighting a
prior with exp(-gamma * pairwise misranking loss). Two interchangeable
backends approximate the resulting distribution and its normalizing
constant: an adaptive tempering SMC sampler (asymptotically exact, usable
as a gold standard) and parallel Expectation-Propagation (fast,
deterministic). Evidence maximization tunes prior hyperparameters;
cross-validation tunes the temperature.
"""

from .data import (
    LabeledDataset,
    StandardizationParams,
    load_dataset,
    standardize,
    stratified_folds,
    stratified_split,
)
from .ep_gaussian import (
    EpConfig,
    EpGaussianResult,
    cavity_moments,
    ep_fit,
    ep_log_evidence,
    loo_cv_score,
    step_tilted_moments,
)
from .ep_spike_slab import (
    SpikeSlabResult,
    ep_fit_spike_slab,
    mixture_tilted_moments,
    regularization_path,
)
from .errors import DataError, NumericalError, ToolkitError
from .gp import GpGibbsTarget, GpPosterior, SqExpKernel, gp_ep_fit, gp_predict, gram
from .model_io import FittedModel, load_model, save_model
from .risk import RocCurve, empirical_auc_risk, misrank_loss, roc_auc
from .smc import (
    ParticleSystem,
    SmcConfig,
    next_temperature,
    rw_metropolis_step,
    run_tempering_smc,
    systematic_resample,
)
from .targets import (
    DefaultHyperRecipe,
    GaussianPrior,
    GibbsTarget,
    HyperDefaults,
    SpikeSlabPrior,
    default_hyperparameters,
    log_pseudo_posterior_unnorm,
)
from .tuning import cross_validate_gamma, maximize_evidence

__version__ = "0.1.0"

__all__ = [
    "LabeledDataset",
    "StandardizationParams",
    "load_dataset",
    "standardize",
    "stratified_folds",
    "stratified_split",
    "EpConfig",
    "EpGaussianResult",
    "cavity_moments",
    "ep_fit",
    "ep_log_evidence",
    "loo_cv_score",
    "step_tilted_moments",
    "SpikeSlabResult",
    "ep_fit_spike_slab",
    "mixture_tilted_moments",
    "regularization_path",
    "DataError",
    "NumericalError",
    "ToolkitError",
    "GpGibbsTarget",
    "GpPosterior",
    "SqExpKernel",
    "gp_ep_fit",
    "gp_predict",
    "gram",
    "FittedModel",
    "load_model",
    "save_model",
    "RocCurve",
    "empirical_auc_risk",
    "misrank_loss",
    "roc_auc",
    "ParticleSystem",
    "SmcConfig",
    "next_temperature",
    "rw_metropolis_step",
    "run_tempering_smc",
    "systematic_resample",
    "DefaultHyperRecipe",
    "GaussianPrior",
    "GibbsTarget",
    "HyperDefaults",
    "SpikeSlabPrior",
    "default_hyperparameters",
    "log_pseudo_posterior_unnorm",
    "cross_validate_gamma",
    "maximize_evidence",
]
