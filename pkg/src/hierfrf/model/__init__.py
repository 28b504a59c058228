"""Probabilistic FRF models: priors, transforms, likelihoods."""

from .distributions import PriorSpec, beta_logpdf, normal_logpdf, truncated_normal_logpdf
from .frf_models import (
    ModelSpecError,
    NoPoolingModel,
    PopulationFRFModel,
    TemperatureFRFModel,
    build_model,
)
from .layout import ParameterLayout
from .specs import FrfDataset, HierarchySpec, PoolingMode, TemperatureSpec

__all__ = [
    "FrfDataset",
    "HierarchySpec",
    "ModelSpecError",
    "NoPoolingModel",
    "ParameterLayout",
    "PoolingMode",
    "PopulationFRFModel",
    "PriorSpec",
    "TemperatureFRFModel",
    "TemperatureSpec",
    "beta_logpdf",
    "build_model",
    "normal_logpdf",
    "truncated_normal_logpdf",
]
