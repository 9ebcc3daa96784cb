"""Layered Shapley data valuation with a stability-based private release."""

from .core import (
    Dataset,
    DatasetError,
    IndexInCoalitionError,
    InvalidIndexError,
    ShapleyError,
    ShapleyEstimate,
    ValueFunction,
    marginal_gain,
)
from .dp import PrivacyParams, laplace_sample, noise_scale, private_layered_all, private_layered_estimate, sensitivity
from .exact import exact_all, exact_value, permutation_shapley
from .layered import (
    LayerPlan,
    build_plan,
    data_touch_bound,
    estimate_from_samples,
    group_estimate,
    layered_estimate,
    layered_estimate_all,
    load_samples,
    save_samples,
)
from .models import ConvergenceError, LogisticValue, LogRegModel, ThresholdERMValue, train_logreg
from .monte_carlo import mc_estimate, mc_estimate_all, mc_sample_size

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "Dataset",
    "DatasetError",
    "IndexInCoalitionError",
    "InvalidIndexError",
    "LayerPlan",
    "LogRegModel",
    "LogisticValue",
    "PrivacyParams",
    "ShapleyError",
    "ShapleyEstimate",
    "ThresholdERMValue",
    "ValueFunction",
    "build_plan",
    "data_touch_bound",
    "estimate_from_samples",
    "exact_all",
    "exact_value",
    "group_estimate",
    "laplace_sample",
    "layered_estimate",
    "layered_estimate_all",
    "load_samples",
    "marginal_gain",
    "mc_estimate",
    "mc_estimate_all",
    "mc_sample_size",
    "noise_scale",
    "permutation_shapley",
    "private_layered_all",
    "private_layered_estimate",
    "save_samples",
    "sensitivity",
    "train_logreg",
]
