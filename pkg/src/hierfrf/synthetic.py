"""Synthetic stand-ins for measured blade FRFs.

Two generators: a population of nominally identical structures whose modes
are jittered around common means, and a single structure whose natural
frequency and damping follow polynomial temperature laws. Frequencies passed
in and stored in truth records are Hz; everything handed to the models is
rad/s.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .modal import ModalParameterSet, TWO_PI, frf_complex
from .model.specs import FrfDataset
from .signal import FrfObservations, add_training_noise, decimate_spectral_lines


@dataclass(frozen=True)
class DomainTruth:
    params: ModalParameterSet  # rad/s
    frequency_hz: np.ndarray
    frf: np.ndarray  # complex, noise-free
    noisy_real: np.ndarray
    train_index: np.ndarray
    temperature: Optional[float] = None

    @property
    def omega(self) -> np.ndarray:
        return TWO_PI * self.frequency_hz

    def training(self) -> FrfObservations:
        i = self.train_index
        return FrfObservations(self.omega[i], self.noisy_real[i], temperature=self.temperature)

    def held_out_mask(self) -> np.ndarray:
        mask = np.ones(self.frequency_hz.size, dtype=bool)
        mask[self.train_index] = False
        return mask


@dataclass
class SyntheticPopulation:
    domains: list
    noise_sd: float
    meta: dict = field(default_factory=dict)

    def training_dataset(self) -> FrfDataset:
        return FrfDataset([d.training() for d in self.domains])

    def __len__(self):
        return len(self.domains)


def frequency_lines(band_hz, resolution_hz) -> np.ndarray:
    lo, hi = band_hz
    if not 0 < lo < hi:
        raise ValueError("band must satisfy 0 < lower < upper")
    n = int(np.floor((hi - lo) / resolution_hz + 1e-9)) + 1
    return lo + resolution_hz * np.arange(n)


def _realise(params_list, freqs_hz, counts, noise_fraction, noise_reference, seed,
             temperatures=None):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    noise_seeds = ss.spawn(len(params_list))
    pick_seeds = ss.spawn(len(params_list))
    w = TWO_PI * freqs_hz
    truth = [frf_complex(p, w) for p in params_list]
    peak = float(np.max(np.abs(truth[noise_reference].real))) if noise_reference is not None \
        else float(max(np.max(np.abs(t.real)) for t in truth))
    noise_sd = noise_fraction * peak
    domains = []
    for k, p in enumerate(params_list):
        obs = FrfObservations(w, truth[k].real.copy())
        noisy = add_training_noise(obs, noise_fraction, noise_seeds[k], peak=peak).value
        n_keep = len(w) if counts[k] is None else int(counts[k])
        idx = np.sort(np.random.default_rng(pick_seeds[k]).choice(len(w), n_keep, replace=False))
        T = None if temperatures is None else float(temperatures[k])
        domains.append(DomainTruth(p, freqs_hz, truth[k], noisy, idx, T))
    return domains, noise_sd


def jittered_population(mean_hz: Sequence[float], damping: Sequence[float],
                        residues: Sequence[float], n_domains: int = 4, jitter: float = 0.02,
                        counts=(100, 100, 7, 20), band_hz=(24.0, 61.0),
                        resolution_hz: float = 0.0488, noise_fraction: float = 0.05,
                        noise_reference: Optional[int] = 1, damping_jitter: float = 0.1,
                        seed=0) -> SyntheticPopulation:
    """Population of structures whose natural frequencies sit within
    ``+/- jitter`` (relative) of common means.

    Noise has standard deviation ``noise_fraction`` times the peak absolute
    real FRF of domain ``noise_reference`` (all domains if ``None``) and is
    added before the ``counts[k]`` training lines are drawn.
    """
    if len(counts) != n_domains:
        raise ValueError("one training count per domain is required")
    if noise_reference is not None and not 0 <= noise_reference < n_domains:
        raise ValueError(f"noise_reference {noise_reference} is not a domain index")
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[0])
    mean_hz = np.asarray(mean_hz, dtype=float)
    params = []
    for k in range(n_domains):
        f = mean_hz * (1.0 + rng.uniform(-jitter, jitter, mean_hz.size))
        z = np.asarray(damping) * (1.0 + rng.uniform(-damping_jitter, damping_jitter, mean_hz.size))
        params.append(ModalParameterSet.from_arrays(np.sort(TWO_PI * f), z, residues, k))
    freqs = frequency_lines(band_hz, resolution_hz)
    domains, sd = _realise(params, freqs, counts, noise_fraction, noise_reference,
                           np.random.SeedSequence(seed).spawn(2)[1])
    return SyntheticPopulation(domains, sd, {"kind": "population", "seed": seed,
                                             "jitter": jitter, "band_hz": list(band_hz),
                                             "resolution_hz": resolution_hz,
                                             "noise_fraction": noise_fraction})


@dataclass(frozen=True)
class TemperatureLaw:
    """``f(T) = f0 + a1 T + a2 T**2`` (Hz) and ``zeta(T) = zeta0 + b T``."""

    f0_hz: float = 145.1
    a1: float = -0.5319
    a2: float = 0.0066
    zeta0: float = 0.0099
    b: float = -8.278e-5
    residue: float = -0.0083

    def params(self, T) -> ModalParameterSet:
        f = self.f0_hz + self.a1 * T + self.a2 * T * T
        return ModalParameterSet.from_arrays(TWO_PI * f, self.zeta0 + self.b * T, self.residue)


def temperature_sweep(law: TemperatureLaw = TemperatureLaw(), temperatures=None,
                      train_temperatures=(-10.0, -5.0, 10.0, 25.0), train_count: int = 100,
                      band_hz=(125.0, 170.0), resolution_hz: float = 0.0488,
                      noise_fraction: float = 0.05, seed=0) -> SyntheticPopulation:
    """FRFs of one structure at several temperatures.

    Every temperature gets its own noisy realisation; training temperatures
    keep ``train_count`` random lines, the rest keep none (their noisy curves
    are test data).
    """
    temps = np.arange(-20.0, 30.0 + 1e-9, 5.0) if temperatures is None else \
        np.asarray(temperatures, dtype=float)
    train = {float(t) for t in train_temperatures}
    params = [law.params(t) for t in temps]
    freqs = frequency_lines(band_hz, resolution_hz)
    counts = [train_count if float(t) in train else 0 for t in temps]
    domains, sd = _realise(params, freqs, [max(c, 0) for c in counts], noise_fraction, None,
                           seed, temperatures=temps)
    return SyntheticPopulation(domains, sd, {"kind": "temperature", "seed": seed,
                                             "train_temperatures": sorted(train),
                                             "band_hz": list(band_hz),
                                             "resolution_hz": resolution_hz,
                                             "noise_fraction": noise_fraction})


def training_temperature_dataset(sweep: SyntheticPopulation) -> FrfDataset:
    return FrfDataset([d.training() for d in sweep.domains if d.train_index.size])
