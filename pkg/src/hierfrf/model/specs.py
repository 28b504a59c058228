"""Data containers and prior hierarchies for the two model families."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np

from ..signal import FrfObservations
from .distributions import PriorSpec


class PoolingMode(str, enum.Enum):
    NO_POOLING = "no_pooling"
    PARTIAL_POOLING = "partial_pooling"
    COMPLETE_POOLING = "complete_pooling"

    @classmethod
    def parse(cls, value) -> "PoolingMode":
        if isinstance(value, cls):
            return value
        aliases = {"none": "no_pooling", "no": "no_pooling", "partial": "partial_pooling",
                   "complete": "complete_pooling", "full": "complete_pooling"}
        value = str(value).lower().replace("-", "_")
        return cls(aliases.get(value, value))


class FrfDataset:
    """Real-part FRF observations for K domains (frequencies in rad/s)."""

    def __init__(self, domains: Sequence[FrfObservations]):
        self.domains = list(domains)
        if not self.domains:
            raise ValueError("a dataset needs at least one domain")
        for k, d in enumerate(self.domains):
            if len(d) == 0:
                raise ValueError(f"domain {k} has no observations")
            if not np.all(np.isfinite(d.real)) or not np.all(np.isfinite(d.frequency)):
                raise ValueError(f"domain {k} contains non-finite values")

    def __len__(self):
        return len(self.domains)

    def __getitem__(self, k) -> FrfObservations:
        return self.domains[k]

    @property
    def n_domains(self) -> int:
        return len(self.domains)

    @property
    def n_points(self) -> int:
        return sum(len(d) for d in self.domains)

    @property
    def temperatures(self) -> np.ndarray:
        temps = [d.temperature for d in self.domains]
        if any(t is None for t in temps):
            raise ValueError("every domain needs a temperature tag")
        return np.array(temps, dtype=float)

    def flat(self):
        """Concatenated ``(omega, real_value, domain_index)`` arrays."""
        w = np.concatenate([d.frequency for d in self.domains])
        y = np.concatenate([d.real for d in self.domains])
        k = np.concatenate([np.full(len(d), i) for i, d in enumerate(self.domains)])
        return w, y, k

    def subset(self, indices) -> "FrfDataset":
        return FrfDataset([self.domains[i] for i in indices])

    def merged(self) -> "FrfDataset":
        w, y, _ = self.flat()
        order = np.argsort(w, kind="stable")
        return FrfDataset([FrfObservations(w[order], y[order], name="pooled")])


def _tn(loc, var):
    return PriorSpec.truncated_normal(loc, var)


@dataclass(frozen=True)
class HierarchySpec:
    """Priors of the multi-structure model (defaults in rad/s).

    ``mu_omega``/``sigma2_omega`` are the hyper-priors of the truncated-normal
    parent of the natural frequencies; ``alpha_zeta``/``beta_zeta`` those of
    the beta parent of the damping ratios; ``mu_A``/``sigma2_A`` those of the
    normal parent of the residues; ``mu_noise``/``sigma2_noise`` those of the
    truncated-normal parent of the noise variance.
    """

    mu_omega: PriorSpec = field(default_factory=lambda: _tn([190.0, 335.0], [25.0, 25.0]))
    sigma2_omega: PriorSpec = field(default_factory=lambda: _tn([5.0, 5.0], [25.0, 25.0]))
    alpha_zeta: PriorSpec = field(default_factory=lambda: _tn([6.0, 6.0], [0.25, 0.25]))
    beta_zeta: PriorSpec = field(default_factory=lambda: _tn([1000.0, 1000.0], [100.0, 100.0]))
    mu_A: PriorSpec = field(
        default_factory=lambda: PriorSpec.normal([-0.004, -0.004], [0.003**2, 0.003**2]))
    sigma2_A: PriorSpec = field(default_factory=lambda: _tn([0.003, 0.003], [0.003**2, 0.003**2]))
    mu_noise: PriorSpec = field(default_factory=lambda: _tn(0.0, 100.0**2))
    sigma2_noise: PriorSpec = field(default_factory=lambda: _tn(100.0, 100.0**2))
    shared_residues: bool = True
    shared_noise: bool = True
    ordered_frequencies: bool = True

    _per_mode = ("mu_omega", "sigma2_omega", "alpha_zeta", "beta_zeta", "mu_A", "sigma2_A")

    def __post_init__(self):
        sizes = {len(getattr(self, name).loc) for name in self._per_mode}
        if len(sizes) != 1:
            raise ValueError("per-mode prior vectors must all have length M")

    @property
    def n_modes(self) -> int:
        return len(self.mu_omega.loc)

    def prior(self, name) -> PriorSpec:
        return getattr(self, name)

    def with_overrides(self, overrides: Optional[dict]) -> "HierarchySpec":
        return _apply_overrides(self, overrides)

    def to_dict(self) -> dict:
        return _spec_to_dict(self)


@dataclass(frozen=True)
class TemperatureSpec:
    """Priors of the temperature-conditioned single-structure model.

    Domain parameters are ``wn_k = mu_omega + a1 T_k + a2 T_k**2`` and
    ``zeta_k = mu_zeta + b T_k``. ``sample_residue_hyper`` keeps ``mu_A`` and
    ``sigma2_A`` as sampled nodes; when false they are fixed at their prior
    locations. ``init_from_peaks`` starts chains from a quadratic fitted to
    the per-temperature resonance peaks instead of the prior centres.
    """

    mu_omega: PriorSpec = field(default_factory=lambda: _tn(910.0, 10.0**2))
    mu_zeta: PriorSpec = field(default_factory=lambda: _tn(0.01, 1.0))
    a1: PriorSpec = field(default_factory=lambda: PriorSpec.normal(-0.01, 1.0))
    a2: PriorSpec = field(default_factory=lambda: PriorSpec.normal(0.001, 1.0))
    b: PriorSpec = field(default_factory=lambda: PriorSpec.normal(-5e-6, 1.0))
    mu_A: PriorSpec = field(default_factory=lambda: PriorSpec.normal(-0.008, 0.002**2))
    sigma2_A: PriorSpec = field(default_factory=lambda: _tn(0.002, 0.002**2))
    sigma2_H: PriorSpec = field(default_factory=lambda: _tn(0.3, 1.0))
    sample_residue_hyper: bool = True
    init_from_peaks: bool = True
    frequency_order: int = 2
    damping_order: int = 1

    def __post_init__(self):
        if self.frequency_order != 2 or self.damping_order != 1:
            raise ValueError("temperature laws are quadratic in frequency and linear in damping")

    @property
    def n_modes(self) -> int:
        return len(self.mu_omega.loc)

    def prior(self, name) -> PriorSpec:
        return getattr(self, name)

    def with_overrides(self, overrides: Optional[dict]) -> "TemperatureSpec":
        return _apply_overrides(self, overrides)

    def to_dict(self) -> dict:
        return _spec_to_dict(self)


def _apply_overrides(spec, overrides):
    if not overrides:
        return spec
    changes = {}
    names = {f.name for f in fields(spec)}
    for key, value in overrides.items():
        if key not in names:
            raise KeyError(f"unknown prior/spec field {key!r}")
        changes[key] = PriorSpec.from_dict(value) if isinstance(value, dict) else value
    return replace(spec, **changes)


def _spec_to_dict(spec) -> dict:
    out = {}
    for f in fields(spec):
        value = getattr(spec, f.name)
        out[f.name] = value.to_dict() if isinstance(value, PriorSpec) else value
    return out
