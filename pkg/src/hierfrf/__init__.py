"""Hierarchical Bayesian modelling of frequency response functions."""

from .analysis import (
    PosteriorSummary,
    kde,
    nmse,
    population_marginal,
    posterior_predictive_frf,
    rhat_ess,
    summarize,
    extrapolate_temperature,
)
from .estimators import HierarchicalFRFRegressor, TemperatureFRFRegressor
from .modal import FrequencyGrid, ModalParameterSet, Mode, frf_complex, frf_imag, frf_real
from .model import FrfDataset, HierarchySpec, PoolingMode, PriorSpec, TemperatureSpec, build_model
from .sampler import SamplerConfig, SamplerError, Trace, adapt_and_sample
from .signal import FrfObservations, TimeSeries, h1_estimate

__version__ = "0.1.0"

__all__ = [
    "FrequencyGrid", "FrfDataset", "FrfObservations", "HierarchicalFRFRegressor",
    "HierarchySpec", "ModalParameterSet", "Mode", "PoolingMode", "PosteriorSummary",
    "PriorSpec", "SamplerConfig", "SamplerError", "TemperatureFRFRegressor", "TemperatureSpec",
    "TimeSeries", "Trace", "adapt_and_sample", "build_model", "extrapolate_temperature",
    "frf_complex", "frf_imag", "frf_real", "h1_estimate", "kde", "nmse", "population_marginal",
    "posterior_predictive_frf", "rhat_ess", "summarize",
]
