"""Time-domain simulation and H1 spectral estimation.

FFT convention: forward transform unscaled (``numpy.fft.rfft``); one-sided
spectra are scaled to power spectral density, ``2 / (fs * sum(w**2))`` with
DC and Nyquist lines not doubled, so that ``sum(Gzz) * df`` equals the mean
square of a rectangular-windowed record. H1 is a ratio and does not depend on
this choice.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import signal as sps

from .modal import FrequencyGrid, ModalParameterSet, TWO_PI, _unpack


class SpectralEstimationError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    samples: np.ndarray = field(repr=False)
    sample_rate: float  # Hz

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or len(samples) < 2:
            raise ValueError("a time series needs at least two samples")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def time(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.sample_rate


@dataclass(frozen=True)
class SpectralRecord:
    frequencies: FrequencyGrid
    cross_spectrum: np.ndarray = field(repr=False)  # G_zu, output x conj(input)
    auto_spectrum: np.ndarray = field(repr=False)  # G_zz of the input
    block_count: int = 1


@dataclass(frozen=True)
class FrfObservations:
    """(frequency, value) pairs of one domain; frequency in rad/s.

    ``value`` holds the real FRF for training sets, or the complex FRF for
    estimates and truth curves.
    """

    frequency: np.ndarray
    value: np.ndarray
    temperature: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        freq = np.atleast_1d(np.asarray(self.frequency, dtype=float))
        value = np.atleast_1d(np.asarray(self.value))
        if freq.shape != value.shape or freq.ndim != 1:
            raise ValueError("frequency and value must be 1-D arrays of equal length")
        object.__setattr__(self, "frequency", freq)
        object.__setattr__(self, "value", value)

    def __len__(self):
        return len(self.frequency)

    @property
    def real(self) -> np.ndarray:
        return np.real(self.value).astype(float)


# -- simulation -------------------------------------------------------------

def _sdof_filter(wn, zeta, dt):
    """Discrete filter from modal force to modal acceleration.

    The continuous transfer ``s**2 / (s**2 + 2 zeta wn s + wn**2)`` is split
    into ``1 - G(s)``; ``G`` is discretised by impulse invariance (with the
    half-sample correction for its jump at t=0), then the direct term is set
    so the DC gain is exactly zero, removing the constant aliasing bias.
    """
    wd = wn * np.sqrt(1.0 - zeta**2)
    pole = complex(-zeta * wn, wd)
    residue = (2.0 * zeta * wn * pole + wn**2) / (2j * wd)
    z = np.exp(pole * dt)
    b_g = dt * np.array([2.0 * residue.real, -2.0 * (residue * np.conj(z)).real])
    a = np.array([1.0, -2.0 * z.real, abs(z) ** 2])
    g_dc = b_g.sum() / a.sum()
    # y = d * f - G_d f with d = G_d(1) so that the DC gain vanishes
    b = g_dc * a - np.concatenate([b_g, [0.0]])
    return b, a


def filter_warmup_samples(params, sample_rate: float) -> int:
    """Samples needed for the slowest mode to decay by one time constant."""
    wn, zeta, _ = _unpack(params)
    tau = 1.0 / np.min(zeta * wn)
    return int(np.ceil(tau * sample_rate))


def simulate_mdof_response(params: ModalParameterSet, excitation: TimeSeries,
                           noise_level: float = 0.0, seed=None) -> TimeSeries:
    """Acceleration response by modal superposition of SDOF filters.

    Each mode is driven by the excitation, filtered to modal acceleration and
    weighted by its residue. Gaussian noise with RMS ``noise_level`` times the
    clean response RMS is added afterwards.
    """
    if noise_level < 0:
        raise ValueError("noise_level must be non-negative")
    wn, zeta, amp = _unpack(params)
    fs = excitation.sample_rate
    if np.max(wn) >= np.pi * fs:
        raise ValueError("a natural frequency lies above the Nyquist frequency")
    warmup = filter_warmup_samples((wn, zeta, amp), fs)
    if len(excitation) < warmup:
        raise ValueError(
            f"excitation has {len(excitation)} samples, shorter than the "
            f"{warmup}-sample filter warm-up"
        )
    dt = 1.0 / fs
    response = np.zeros(len(excitation))
    for w, z, a_m in zip(wn, zeta, amp):
        b, a = _sdof_filter(w, z, dt)
        response += a_m * sps.lfilter(b, a, excitation.samples)
    if noise_level > 0:
        rng = np.random.default_rng(seed)
        rms = np.sqrt(np.mean(response**2))
        response = response + rng.normal(0.0, noise_level * rms, size=response.shape)
    return TimeSeries(response, fs)


# -- spectra ------------------------------------------------------------------

def hann_window(n: int) -> np.ndarray:
    """Symmetric Hann window, zero at both ends."""
    if n < 2:
        raise ValueError("window length must be at least 2")
    i = np.arange(n)
    return 0.5 * (1.0 - np.cos(TWO_PI * i / (n - 1)))


def _window(kind: str, n: int) -> np.ndarray:
    if kind in ("hann", "hanning"):
        return hann_window(n)
    if kind in ("rect", "rectangular", "boxcar", None):
        return np.ones(n)
    raise ValueError(f"unknown window {kind!r}")


def averaged_spectra(input: TimeSeries, output: TimeSeries, block_count: int = 20,
                     window: str = "hann") -> SpectralRecord:
    """Block-averaged one-sided cross and auto spectra (no overlap)."""
    if len(input) != len(output):
        raise SpectralEstimationError(
            f"input and output lengths differ ({len(input)} vs {len(output)})"
        )
    if input.sample_rate != output.sample_rate:
        raise SpectralEstimationError("input and output sample rates differ")
    if block_count < 1:
        raise ValueError("block_count must be >= 1")
    n_block = len(input) // block_count
    if n_block < 2:
        raise SpectralEstimationError("too many blocks for the record length")
    fs = input.sample_rate
    win = _window(window, n_block)
    used = n_block * block_count
    z = input.samples[:used].reshape(block_count, n_block) * win
    u = output.samples[:used].reshape(block_count, n_block) * win
    s_z = np.fft.rfft(z, axis=1)
    s_u = np.fft.rfft(u, axis=1)
    scale = np.full(s_z.shape[1], 2.0 / (fs * np.sum(win**2)))
    scale[0] /= 2.0
    if n_block % 2 == 0:
        scale[-1] /= 2.0
    g_zu = scale * np.mean(s_u * np.conj(s_z), axis=0)
    g_zz = scale * np.mean((s_z * np.conj(s_z)).real, axis=0)
    freqs = np.fft.rfftfreq(n_block, d=1.0 / fs)
    return SpectralRecord(FrequencyGrid.from_hz(freqs).to_rad_per_s(), g_zu, g_zz, block_count)


def h1_estimate(input: TimeSeries, output: TimeSeries, block_count: int = 20,
                window: str = "hann"):
    """H1 FRF estimate ``G_zu / G_zz`` on the one-sided grid (rad/s)."""
    record = averaged_spectra(input, output, block_count, window)
    zero = np.flatnonzero(record.auto_spectrum == 0)
    if zero.size:
        line = zero[0]
        raise SpectralEstimationError(
            f"input auto-spectrum vanishes at line {line} "
            f"({record.frequencies.hz[line]:g} Hz)"
        )
    return record.frequencies, record.cross_spectrum / record.auto_spectrum


# -- training-set manipulation -------------------------------------------------

def decimate_spectral_lines(frf: FrfObservations, keep: int, seed=None) -> FrfObservations:
    """Random subset of ``keep`` lines without replacement, in original order."""
    n = len(frf)
    if not 1 <= keep <= n:
        raise ValueError(f"keep must lie in [1, {n}], got {keep}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=keep, replace=False))
    return replace(frf, frequency=frf.frequency[idx], value=frf.value[idx])


def add_training_noise(frf: FrfObservations, fraction: float, seed=None,
                       peak: Optional[float] = None) -> FrfObservations:
    """Add Gaussian noise with std ``fraction * peak``.

    ``peak`` defaults to ``max|value|`` of ``frf`` itself; pass another
    domain's peak to share one noise level across a population.
    """
    if len(frf) == 0:
        raise ValueError("cannot add noise to an empty observation list")
    if fraction < 0:
        raise ValueError("fraction must be non-negative")
    if fraction == 0:
        return frf
    if peak is None:
        peak = float(np.max(np.abs(frf.value)))
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, fraction * peak, size=len(frf))
    return replace(frf, value=frf.value + noise)
