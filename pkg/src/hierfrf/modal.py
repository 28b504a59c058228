"""Closed-form modal accelerance FRFs.

All frequencies are in rad/s. The accelerance of a proportionally damped
system with real residues is

    H(w) = -w**2 * sum_m A_m / (wn_m**2 - w**2 + 2j * zeta_m * w * wn_m)

and the real/imaginary parts below are evaluated with the factored
denominator ``(wn**2 - w**2)**2 + (2 zeta w wn)**2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


class FrfEvaluationError(ArithmeticError):
    """Raised when the modal FRF is not finite on the requested grid."""


@dataclass(frozen=True)
class Mode:
    natural_frequency: float  # rad/s
    damping_ratio: float
    residue: float

    def __post_init__(self):
        if not self.natural_frequency > 0:
            raise ValueError(f"natural_frequency must be > 0, got {self.natural_frequency}")
        if not 0 < self.damping_ratio < 1:
            raise ValueError(f"damping_ratio must lie in (0, 1), got {self.damping_ratio}")
        if not np.isfinite(self.residue):
            raise ValueError("residue must be finite")


@dataclass(frozen=True)
class ModalParameterSet:
    """Ordered modes of one domain (structure or temperature state)."""

    modes: tuple[Mode, ...]
    domain_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if len(self.modes) < 1:
            raise ValueError("at least one mode is required")
        wn = self.natural_frequencies
        if np.any(np.diff(wn) <= 0):
            raise ValueError("natural frequencies must be strictly increasing")

    @classmethod
    def from_arrays(cls, natural_frequency, damping_ratio, residue, domain_index=0):
        wn, zeta, amp = np.broadcast_arrays(
            np.atleast_1d(np.asarray(natural_frequency, dtype=float)),
            np.atleast_1d(np.asarray(damping_ratio, dtype=float)),
            np.atleast_1d(np.asarray(residue, dtype=float)),
        )
        modes = [Mode(float(w), float(z), float(a)) for w, z, a in zip(wn, zeta, amp)]
        return cls(tuple(modes), domain_index)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def natural_frequencies(self) -> np.ndarray:
        return np.array([m.natural_frequency for m in self.modes])

    @property
    def damping_ratios(self) -> np.ndarray:
        return np.array([m.damping_ratio for m in self.modes])

    @property
    def residues(self) -> np.ndarray:
        return np.array([m.residue for m in self.modes])


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing, non-negative frequencies tagged with a unit."""

    values: np.ndarray = field(repr=False)
    unit_tag: str = "rad_per_s"

    def __post_init__(self):
        if self.unit_tag not in ("rad_per_s", "hz"):
            raise ValueError(f"unknown unit tag {self.unit_tag!r}")
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if values.ndim != 1:
            raise ValueError("frequency grid must be one-dimensional")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("frequencies must be finite and non-negative")
        if np.any(np.diff(values) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_hz(cls, values) -> "FrequencyGrid":
        return cls(values, "hz")

    def __len__(self):
        return len(self.values)

    def to_rad_per_s(self) -> "FrequencyGrid":
        if self.unit_tag == "rad_per_s":
            return self
        return FrequencyGrid(self.values * TWO_PI, "rad_per_s")

    def to_hz(self) -> "FrequencyGrid":
        if self.unit_tag == "hz":
            return self
        return FrequencyGrid(self.values / TWO_PI, "hz")

    @property
    def rad_per_s(self) -> np.ndarray:
        return self.to_rad_per_s().values

    @property
    def hz(self) -> np.ndarray:
        return self.to_hz().values


def _as_omega(grid) -> np.ndarray:
    if isinstance(grid, FrequencyGrid):
        return grid.rad_per_s
    return np.asarray(grid, dtype=float)


def _unpack(params):
    if isinstance(params, ModalParameterSet):
        return params.natural_frequencies, params.damping_ratios, params.residues
    wn, zeta, amp = params
    return (np.atleast_1d(np.asarray(wn, dtype=float)),
            np.atleast_1d(np.asarray(zeta, dtype=float)),
            np.atleast_1d(np.asarray(amp, dtype=float)))


def _check_finite(values, wn, zeta, w):
    if np.all(np.isfinite(values)):
        return
    # values has shape (n_points, n_modes) here
    bad = np.argwhere(~np.isfinite(values))
    i, m = bad[0]
    raise FrfEvaluationError(
        f"non-finite FRF for mode {m} (wn={wn[m]:g} rad/s, zeta={zeta[m]:g}) "
        f"at w={w[i]:g} rad/s"
    )


def _terms(params, grid):
    wn, zeta, amp = _unpack(params)
    w = _as_omega(grid)
    w_col = w[:, None]
    a = wn**2 - w_col**2
    b = 2.0 * zeta * w_col * wn
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = a * a + b * b
        real = -(w_col**2) * amp * a / denom
        imag = (w_col**2) * amp * b / denom
    # w = 0 is an exact zero of every term, even when the denominator vanishes
    zero = w_col == 0
    real = np.where(zero, 0.0, real)
    imag = np.where(zero, 0.0, imag)
    _check_finite(real + imag, wn, zeta, w)
    return w, wn, zeta, amp, a, b, denom, real, imag


def frf_complex(params, grid) -> np.ndarray:
    """Complex accelerance on ``grid`` (rad/s) as a direct complex sum."""
    wn, zeta, amp = _unpack(params)
    w = _as_omega(grid)
    w_col = w[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = -(w_col**2) * amp / (wn**2 - w_col**2 + 2j * zeta * w_col * wn)
    terms = np.where(w_col == 0, 0.0 + 0.0j, terms)
    _check_finite(terms, wn, zeta, w)
    return terms.sum(axis=1)


def frf_real(params, grid) -> np.ndarray:
    """Real part of the accelerance."""
    return _terms(params, grid)[7].sum(axis=1)


def frf_imag(params, grid) -> np.ndarray:
    """Imaginary part of the accelerance."""
    return _terms(params, grid)[8].sum(axis=1)


def frf_real_gradient(params, grid) -> np.ndarray:
    """Analytic partials of the real FRF.

    Returns an array of shape ``(len(grid), 3 * M)`` whose columns are
    ``[d/d wn_1..wn_M, d/d zeta_1..zeta_M, d/d A_1..A_M]``.
    """
    w, wn, zeta, amp, a, b, denom, real, _ = _terms(params, grid)
    w2 = (w**2)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        d_amp = -w2 * a / denom
        d_denom_wn = 4.0 * a * wn + 4.0 * b * zeta * w[:, None]
        d_wn = -w2 * amp * (2.0 * wn / denom - a * d_denom_wn / denom**2)
        d_zeta = w2 * amp * a * 4.0 * b * w[:, None] * wn / denom**2
    zero = (w == 0)[:, None]
    out = np.concatenate([d_wn, d_zeta, d_amp], axis=1)
    return np.where(zero, 0.0, out)


def real_part_and_partials(wn, zeta, amp, w):
    """Vectorised per-point kernel used by the likelihood.

    ``wn``, ``zeta``, ``amp`` have shape ``(N, M)`` (one row per observation),
    ``w`` has shape ``(N,)``. Returns the real FRF ``(N,)`` and the partials
    with respect to ``wn``, ``zeta``, ``amp``, each ``(N, M)``.
    """
    w_col = w[:, None]
    w2 = w_col * w_col
    a = wn * wn - w2
    b = 2.0 * zeta * w_col * wn
    inv = 1.0 / (a * a + b * b)
    term_a = a * inv
    d_amp = -w2 * term_a
    f = (amp * d_amp).sum(axis=1)
    inv2 = inv * inv
    d_wn = -w2 * amp * (2.0 * wn * inv - a * (4.0 * a * wn + 4.0 * b * zeta * w_col) * inv2)
    d_zeta = 4.0 * w2 * amp * a * b * w_col * wn * inv2
    return f, d_wn, d_zeta, d_amp


def unit_residue_frf(wn, zeta, grid) -> np.ndarray:
    """Per-mode real FRF with unit residue, shape ``(len(grid), M)``."""
    ones = np.ones_like(np.atleast_1d(np.asarray(wn, dtype=float)))
    return _terms((wn, zeta, ones), grid)[7]


def hz_to_rad(values: Iterable[float] | float):
    return np.asarray(values, dtype=float) * TWO_PI


def rad_to_hz(values: Sequence[float] | float):
    return np.asarray(values, dtype=float) / TWO_PI
