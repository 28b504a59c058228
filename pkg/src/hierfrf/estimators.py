"""scikit-learn style estimators around the hierarchical FRF models.

``X`` holds frequencies in its first column (rad/s unless
``frequency_unit="hz"``) and, optionally, a domain label or a temperature in
its second column; ``y`` is the real part of the FRF.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .analysis import extrapolate_temperature, nmse, posterior_predictive_frf, summarize
from .modal import TWO_PI, frf_real
from .model import FrfDataset, HierarchySpec, PoolingMode, TemperatureSpec, build_model
from .model.frf_models import NoPoolingModel
from .sampler import SamplerConfig, adapt_and_sample, concatenate_traces
from .signal import FrfObservations


def _sampler_config(sampler) -> SamplerConfig:
    if sampler is None:
        return SamplerConfig()
    if isinstance(sampler, SamplerConfig):
        return sampler
    return SamplerConfig.from_dict(dict(sampler))


def _frequency(X, unit):
    X = check_array(X, ensure_2d=True, dtype=float)
    if X.shape[1] not in (1, 2):
        raise ValueError(f"X must have 1 or 2 columns, got {X.shape[1]}")
    if unit not in ("rad_per_s", "hz"):
        raise ValueError("frequency_unit must be 'rad_per_s' or 'hz'")
    w = X[:, 0] * (TWO_PI if unit == "hz" else 1.0)
    if np.any(w < 0):
        raise ValueError("frequencies must be non-negative")
    return X, w


def fit_trace(model, config: SamplerConfig):
    """Sample ``model``; independent submodels are fitted one by one."""
    if isinstance(model, NoPoolingModel):
        traces = []
        for k, sub in enumerate(model.submodels):
            cfg = SamplerConfig.from_dict({**config.to_dict(), "seed": config.seed + k})
            traces.append(adapt_and_sample(sub, cfg))
        return concatenate_traces(traces, [f"domain{k + 1}." for k in range(len(traces))])
    return adapt_and_sample(model, config)


class HierarchicalFRFRegressor(RegressorMixin, BaseEstimator):
    """Bayesian modal FRF model for a population of structures.

    The second column of ``X`` (if present) labels the domain with integers
    ``0..K-1``. ``predict`` returns the posterior-predictive mean.
    """

    def __init__(self, n_modes=2, pooling="partial_pooling", priors=None, sampler=None,
                 ordered_frequencies=True, frequency_unit="rad_per_s",
                 band_composition="literal", max_predictive_draws=2000):
        self.n_modes = n_modes
        self.pooling = pooling
        self.priors = priors
        self.sampler = sampler
        self.ordered_frequencies = ordered_frequencies
        self.frequency_unit = frequency_unit
        self.band_composition = band_composition
        self.max_predictive_draws = max_predictive_draws

    def _spec(self) -> HierarchySpec:
        spec = HierarchySpec(ordered_frequencies=self.ordered_frequencies)
        spec = spec.with_overrides(self.priors)
        if spec.n_modes != self.n_modes:
            raise ValueError(f"priors describe {spec.n_modes} modes but n_modes={self.n_modes}")
        return spec

    @staticmethod
    def _labels(X):
        if X.shape[1] == 1:
            return np.zeros(X.shape[0], dtype=int)
        lab = X[:, 1]
        if np.any(lab != np.round(lab)) or np.any(lab < 0):
            raise ValueError("domain labels must be non-negative integers")
        return lab.astype(int)

    def fit(self, X, y):
        X, w = _frequency(X, self.frequency_unit)
        y = check_array(y, ensure_2d=False, dtype=float)
        check_consistent_length(X, y)
        labels = self._labels(X)
        K = int(labels.max()) + 1
        domains = []
        for k in range(K):
            sel = labels == k
            if not np.any(sel):
                raise ValueError(f"domain {k} has no observations")
            domains.append(FrfObservations(w[sel], y[sel], name=f"domain{k + 1}"))
        self.data_ = FrfDataset(domains)
        self.model_ = build_model(self.data_, self._spec(), PoolingMode.parse(self.pooling))
        self.trace_ = fit_trace(self.model_, _sampler_config(self.sampler))
        self.summary_ = summarize(self.trace_)
        self.n_domains_ = K
        self.n_features_in_ = X.shape[1]
        return self

    def predict_band(self, X):
        """``(mean, lower, upper)`` of the 3-sigma predictive band per row."""
        check_is_fitted(self, "trace_")
        X, w = _frequency(X, self.frequency_unit)
        labels = self._labels(X)
        mean, lo, hi = (np.empty(len(w)) for _ in range(3))
        for k in np.unique(labels):
            if k >= self.n_domains_:
                raise ValueError(f"unknown domain {k}")
            sel = labels == k
            band = posterior_predictive_frf(self.trace_, self.model_, w[sel], int(k),
                                            composition=self.band_composition,
                                            max_draws=self.max_predictive_draws)
            mean[sel], lo[sel], hi[sel] = band.mean, band.lower, band.upper
        return mean, lo, hi

    def predict(self, X):
        return self.predict_band(X)[0]

    def nmse(self, X, y) -> float:
        return nmse(y, self.predict(X))


class TemperatureFRFRegressor(RegressorMixin, BaseEstimator):
    """Single structure under varying temperature.

    ``X[:, 1]`` is the temperature in degC; rows sharing a temperature form
    one training domain. ``predict`` substitutes posterior expectations into
    the temperature laws, so any temperature can be queried.
    """

    def __init__(self, priors=None, sampler=None, sample_residue_hyper=True,
                 frequency_unit="rad_per_s", band_composition="literal",
                 max_predictive_draws=2000):
        self.priors = priors
        self.sampler = sampler
        self.sample_residue_hyper = sample_residue_hyper
        self.frequency_unit = frequency_unit
        self.band_composition = band_composition
        self.max_predictive_draws = max_predictive_draws

    def fit(self, X, y):
        X, w = _frequency(X, self.frequency_unit)
        if X.shape[1] != 2:
            raise ValueError("X needs a temperature column")
        y = check_array(y, ensure_2d=False, dtype=float)
        check_consistent_length(X, y)
        temps = np.unique(X[:, 1])
        domains = [FrfObservations(w[X[:, 1] == T], y[X[:, 1] == T], temperature=float(T))
                   for T in temps]
        spec = TemperatureSpec(sample_residue_hyper=self.sample_residue_hyper)
        self.data_ = FrfDataset(domains)
        self.model_ = build_model(self.data_, spec.with_overrides(self.priors))
        self.trace_ = adapt_and_sample(self.model_, _sampler_config(self.sampler))
        self.summary_ = summarize(self.trace_)
        self.temperatures_ = temps
        self.n_features_in_ = 2
        return self

    def modal_parameters(self, temperatures):
        check_is_fitted(self, "summary_")
        return extrapolate_temperature(self.summary_, temperatures)

    def predict(self, X):
        check_is_fitted(self, "summary_")
        X, w = _frequency(X, self.frequency_unit)
        if X.shape[1] != 2:
            raise ValueError("X needs a temperature column")
        out = np.empty(len(w))
        for T in np.unique(X[:, 1]):
            sel = X[:, 1] == T
            pred = extrapolate_temperature(self.summary_, [T])[0]
            out[sel] = frf_real(pred.modes, w[sel])
        return out

    def predict_band(self, X):
        check_is_fitted(self, "trace_")
        X, w = _frequency(X, self.frequency_unit)
        mean, lo, hi = (np.empty(len(w)) for _ in range(3))
        for T in np.unique(X[:, 1]):
            sel = X[:, 1] == T
            band = posterior_predictive_frf(self.trace_, self.model_, w[sel], None,
                                            temperature=float(T),
                                            composition=self.band_composition,
                                            max_draws=self.max_predictive_draws)
            mean[sel], lo[sel], hi[sel] = band.mean, band.lower, band.upper
        return mean, lo, hi
