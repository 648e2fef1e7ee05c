"""Bayesian regression with symmetrized Dirichlet process mixture errors."""
from .distributions import ERROR_TOKENS, ErrorSpec, RngStream, parse_error_spec
from .exceptions import (ConfigurationError, DataFormatError, DimensionError, InvariantError, ParameterError,
                         QuadratureError, SdpmixError, SingularDesignError)
from .models import GenerativeConfig, GrowthModel, PanelDataset, load_growth_data, simulate_dataset
from .sampler import ChainConfig, GibbsSampler, ModelSpec, PosteriorSummary, PriorConfig, run_chain
from .sdp import SdpPrior, gibbs_class_sweep, gibbs_direct_sweep, predictive_weights, stick_breaking_sample
from .baselines import mle_normal_normal, ols_fit

__version__ = "0.1.0"

__all__ = [
    "ERROR_TOKENS", "ErrorSpec", "RngStream", "parse_error_spec",
    "ConfigurationError", "DataFormatError", "DimensionError", "InvariantError", "ParameterError",
    "QuadratureError", "SdpmixError", "SingularDesignError",
    "GenerativeConfig", "GrowthModel", "PanelDataset", "load_growth_data", "simulate_dataset",
    "ChainConfig", "GibbsSampler", "ModelSpec", "PosteriorSummary", "PriorConfig", "run_chain",
    "SdpPrior", "gibbs_class_sweep", "gibbs_direct_sweep", "predictive_weights", "stick_breaking_sample",
    "mle_normal_normal", "ols_fit",
]
