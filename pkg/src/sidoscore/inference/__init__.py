from .model import (
    FitError,
    HierarchicalEffectsRegressor,
    ModelConfig,
    PosteriorFit,
    fit_hierarchical,
    posterior_summary,
    predict,
    sign_probability,
)
from .diagnostics import Diagnostics, compute_diagnostics, effective_sample_size, split_rhat
from .store import CorruptFitError, FitStore, load_fit, save_fit

__all__ = [
    "CorruptFitError",
    "Diagnostics",
    "FitError",
    "FitStore",
    "HierarchicalEffectsRegressor",
    "ModelConfig",
    "PosteriorFit",
    "compute_diagnostics",
    "effective_sample_size",
    "fit_hierarchical",
    "load_fit",
    "posterior_summary",
    "predict",
    "save_fit",
    "sign_probability",
    "split_rhat",
]
