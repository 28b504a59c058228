"""Posterior post-processing: diagnostics, marginal densities, predictive
FRF bands, temperature extrapolation and NMSE."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from .modal import FrequencyGrid, ModalParameterSet, _as_omega, frf_real
from .sampler import Trace, format_float


class DiagnosticError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Convergence diagnostics


def _as_chains(trace_or_draws, parameter=None) -> np.ndarray:
    if isinstance(trace_or_draws, Trace):
        if parameter is None:
            raise ValueError("a parameter name or index is required for a Trace")
        idx = parameter if isinstance(parameter, (int, np.integer)) else trace_or_draws.index(parameter)
        x = trace_or_draws.constrained[:, :, idx]
    else:
        x = np.asarray(trace_or_draws, dtype=float)
    if x.ndim != 2:
        raise ValueError("draws must be shaped (chains, draws)")
    if x.shape[0] < 2 or x.shape[1] < 4:
        raise DiagnosticError("diagnostics need at least 2 chains of at least 4 draws")
    if not np.all(np.isfinite(x)):
        raise DiagnosticError("draws contain non-finite values")
    return x


def _split(x):
    half = x.shape[1] // 2
    return np.concatenate([x[:, :half], x[:, x.shape[1] - half:]], axis=0)


def _z_scale(x):
    ranks = stats.rankdata(x, method="average").reshape(x.shape)
    return special.ndtri((ranks - 0.375) / (x.size + 0.25))


def _basic_rhat(x):
    n = x.shape[1]
    within = np.mean(np.var(x, axis=1, ddof=1))
    between = n * np.var(np.mean(x, axis=1), ddof=1)
    return np.sqrt(((n - 1) / n * within + between / n) / within)


def _autocovariance(x):
    """Biased autocovariance of each row via FFT."""
    n = x.shape[-1]
    centred = x - x.mean(axis=-1, keepdims=True)
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(centred, size, axis=-1)
    return np.fft.irfft(f * np.conj(f), size, axis=-1)[..., :n] / n


def effective_sample_size(x) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence estimator."""
    m, n = x.shape
    acov = _autocovariance(x)
    mean_var = np.mean(acov[:, 0]) * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += np.var(np.mean(x, axis=1), ddof=1)
    rho = np.zeros(n)
    rho_even, rho_odd = 1.0, 1.0 - (mean_var - np.mean(acov[:, 1])) / var_plus
    rho[0], rho[1] = rho_even, rho_odd
    t = 1
    while t < n - 3 and rho_even + rho_odd > 0.0:
        rho_even = 1.0 - (mean_var - np.mean(acov[:, t + 1])) / var_plus
        rho_odd = 1.0 - (mean_var - np.mean(acov[:, t + 2])) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1], rho[t + 2] = rho_even, rho_odd
        t += 2
    max_t = t - 2
    if rho[max_t + 1] > 0:
        rho[max_t + 2] = rho[max_t + 1]
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = rho[t + 2] = 0.5 * (rho[t - 1] + rho[t])
        t += 2
    total = m * n
    tau = -1.0 + 2.0 * np.sum(rho[: max_t + 1]) + np.sum(rho[max_t + 1: max_t + 2])
    tau = max(tau, 1.0 / np.log10(total))
    return float(total / tau)


def rhat_ess(trace, parameter=None):
    """Split R-hat on the raw draws and rank-normalised bulk ESS.

    Accepts a :class:`Trace` plus a parameter name/index, or a raw
    ``(chains, draws)`` array.
    """
    x = _as_chains(trace, parameter)
    if np.ptp(x) == 0 or np.any(np.ptp(x, axis=1) == 0):
        raise DiagnosticError("a chain has zero variance; R-hat is undefined")
    s = _split(x)
    return float(_basic_rhat(s)), effective_sample_size(_z_scale(s))


def mcse_mean(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.std(x, ddof=1) / np.sqrt(effective_sample_size(_split(x))))


# ---------------------------------------------------------------------------
# Summaries


@dataclass
class PosteriorSummary:
    """Per-parameter posterior table; optional predictive curves per domain."""

    names: list
    mean: np.ndarray
    sd: np.ndarray
    quantiles: dict
    rhat: np.ndarray
    ess: np.ndarray
    predictive: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.names)

    def expectation(self, name) -> float:
        return float(self.mean[self.names.index(name)])

    def to_dict(self) -> dict:
        params = {}
        for i, n in enumerate(self.names):
            params[n] = {"mean": float(self.mean[i]), "sd": float(self.sd[i]),
                         **{k: float(v[i]) for k, v in self.quantiles.items()},
                         "rhat": float(self.rhat[i]), "ess_bulk": float(self.ess[i])}
        return {"parameters": params, **self.extra}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d) -> "PosteriorSummary":
        params = d["parameters"]
        names = list(params)
        col = lambda key: np.array([params[n].get(key, np.nan) for n in names])  # noqa: E731
        qkeys = [k for k in next(iter(params.values())) if k.startswith("q")] if names else []
        extra = {k: v for k, v in d.items() if k != "parameters"}
        return cls(names, col("mean"), col("sd"), {k: col(k) for k in qkeys}, col("rhat"),
                   col("ess_bulk"), extra=extra)


def summarize(trace: Trace, quantiles=(0.05, 0.5, 0.95)) -> PosteriorSummary:
    x = trace.constrained
    flat = x.reshape(-1, trace.dim)
    rhat = np.full(trace.dim, np.nan)
    ess = np.full(trace.dim, np.nan)
    for i in range(trace.dim):
        try:
            rhat[i], ess[i] = rhat_ess(x[:, :, i])
        except DiagnosticError:
            pass
    qs = {f"q{int(round(q * 100)):02d}": np.quantile(flat, q, axis=0) for q in quantiles}
    return PosteriorSummary(list(trace.names), flat.mean(axis=0), flat.std(axis=0, ddof=1),
                            qs, rhat, ess)


# ---------------------------------------------------------------------------
# Kernel density estimates


@dataclass(frozen=True)
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def __call__(self, x):
        return np.interp(x, self.grid, self.density, left=0.0, right=0.0)

    @property
    def mode(self) -> float:
        return float(self.grid[np.argmax(self.density)])

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("value,density\n")
            for g, d in zip(self.grid, self.density):
                fh.write(f"{format_float(g)},{format_float(d)}\n")


def silverman_bandwidth(x) -> float:
    x = np.asarray(x, dtype=float)
    sd = np.std(x, ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return float(0.9 * spread * x.size ** (-0.2))


def kde(samples, grid_points: int = 512, chunk: int = 2_000_000) -> KdeCurve:
    """Gaussian KDE on an even grid spanning the samples +/- 3 bandwidths.

    The curve is rescaled so its trapezoid integral over the grid is one.
    """
    x = np.asarray(samples, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size < 2 or np.ptp(x) == 0:
        raise ValueError("kde needs at least two distinct finite samples")
    if grid_points < 2:
        raise ValueError("grid_points must be at least 2")
    h = silverman_bandwidth(x)
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, grid_points)
    dens = np.zeros(grid_points)
    step = max(1, chunk // grid_points)
    for start in range(0, x.size, step):
        z = (grid[:, None] - x[None, start:start + step]) / h
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    dens /= x.size * h * np.sqrt(2 * np.pi)
    dens /= np.trapezoid(dens, grid)
    return KdeCurve(grid, dens, h)


# ---------------------------------------------------------------------------
# Population-level marginals

FAMILIES = {
    "omega": ("mu_omega", "sigma2_omega", "truncated_normal"),
    "zeta": ("alpha_zeta", "beta_zeta", "beta"),
    "A": ("mu_A", "sigma2_A", "normal"),
    "noise": ("mu_noise", "sigma2_noise", "truncated_normal"),
}


def two_stage_draws(first, second, kind: str, rng) -> np.ndarray:
    """One draw from the parent distribution per hyper-parameter draw.

    ``first``/``second`` are (mean, variance) for the normal kinds and the
    shape pair for ``beta``. Truncated normals are cut at zero.
    """
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    if kind == "normal":
        return first + np.sqrt(second) * rng.standard_normal(first.shape)
    if kind == "truncated_normal":
        sd = np.sqrt(second)
        a = (0.0 - first) / sd
        u = rng.uniform(size=first.shape)
        # inverse-CDF sampling on the retained tail, in log space for stability
        lo = special.log_ndtr(a)
        z = special.ndtri(np.exp(lo) + u * -np.expm1(lo))
        return first + sd * np.where(np.isfinite(z), z, np.maximum(a, 0.0))
    if kind == "beta":
        return rng.beta(first, second)
    raise ValueError(f"unknown parent kind {kind!r}")


def _family_columns(trace: Trace, family: str, mode: Optional[int]):
    if family not in FAMILIES:
        raise KeyError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}")
    first, second, kind = FAMILIES[family]
    suffix = "" if mode is None else f"[{mode}]"
    names = (first + suffix, second + suffix)
    for n in names:
        if n not in trace.names:
            raise KeyError(f"{n!r} is not in the trace")
    return trace.values(names[0]).ravel(), trace.values(names[1]).ravel(), kind


def population_marginal(trace: Trace, family: str, mode: Optional[int] = 1, seed=0,
                        grid_points: int = 512) -> KdeCurve:
    """KDE of the population distribution of a parameter family.

    For every posterior draw of the family's hyper-parameters one value is
    drawn from the parent distribution; the pooled values are smoothed.
    ``mode`` is the 1-based mode index (``None`` for scalar families).
    """
    if family == "noise":
        mode = None
    first, second, kind = _family_columns(trace, family, mode)
    rng = np.random.default_rng(seed)
    return kde(two_stage_draws(first, second, kind, rng), grid_points)


def domain_marginal(trace: Trace, name: str, grid_points: int = 512) -> KdeCurve:
    return kde(trace.values(name).ravel(), grid_points)


# ---------------------------------------------------------------------------
# Posterior predictive FRFs


@dataclass
class PredictiveBand:
    frequency: np.ndarray  # rad/s
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    curve_sd: np.ndarray
    noise_sd: float

    def contains(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return (values >= self.lower) & (values <= self.upper)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("freq_hz,mean,lower,upper\n")
            for row in zip(self.frequency / (2 * np.pi), self.mean, self.lower, self.upper):
                fh.write(",".join(format_float(v) for v in row) + "\n")


def _draw_rows(trace: Trace, max_draws, seed) -> np.ndarray:
    x = trace.constrained.reshape(-1, trace.dim)
    if x.shape[0] == 0:
        raise ValueError("trace is empty")
    if max_draws is not None and max_draws < x.shape[0]:
        idx = np.sort(np.random.default_rng(seed).choice(x.shape[0], max_draws, replace=False))
        x = x[idx]
    return x


def _column(names, name):
    try:
        return names.index(name)
    except ValueError:
        raise KeyError(f"{name!r} is not in the trace") from None


def _mode_columns(names, base):
    """Columns of ``base[1..M]``, or of the bare scalar ``base``."""
    cols = _node_columns(names, base)
    if not cols:
        raise KeyError(f"{base!r} is not in the trace")
    return cols


def _is_temperature_layout(names) -> bool:
    return bool(_node_columns(names, "a1")) and bool(_node_columns(names, "mu_zeta"))


def _temperature_parameters(names, x, T):
    c = {n: _mode_columns(names, n) for n in ("mu_omega", "a1", "a2", "mu_zeta", "b", "A")}
    wn = x[:, c["mu_omega"]] + x[:, c["a1"]] * T + x[:, c["a2"]] * T * T
    zeta = x[:, c["mu_zeta"]] + x[:, c["b"]] * T
    return wn, zeta, x[:, c["A"]], x[:, _column(names, "sigma2_H")]


def _domain_parameters(names, x, k, n_modes):
    """Per-draw ``(wn, zeta, A, sigma2_H)`` of domain ``k`` (0-based) read by name.

    Handles independent fits (``domain{k}.`` prefixes), complete pooling
    (a single domain) and unshared residues/noise.
    """
    prefix, kk = "", k + 1
    if any(n.startswith(f"domain{k + 1}.") for n in names):
        prefix, kk = f"domain{k + 1}.", 1
    elif f"omega_nat[{kk},1]" not in names:
        if f"omega_nat[1,1]" in names and f"omega_nat[2,1]" not in names:
            kk = 1
        else:
            raise KeyError(f"domain {k} is not in the trace")
    M = n_modes or len([n for n in names if n.startswith(f"{prefix}omega_nat[{kk},")])
    cols = lambda base: [_column(names, f"{prefix}{base}[{kk},{m}]") for m in range(1, M + 1)]  # noqa: E731
    wn, zeta = x[:, cols("omega_nat")], x[:, cols("zeta")]
    if f"{prefix}A[1]" in names:
        amp = x[:, [_column(names, f"{prefix}A[{m}]") for m in range(1, M + 1)]]
    else:
        amp = x[:, cols("A")]
    noise_name = f"{prefix}sigma2_H" if f"{prefix}sigma2_H" in names else f"{prefix}sigma2_H[{kk}]"
    return wn, zeta, amp, x[:, _column(names, noise_name)]


def _predictive_parameters(model, trace, domain, temperature, max_draws, seed):
    x = _draw_rows(trace, max_draws, seed)
    names = list(trace.names)
    if _is_temperature_layout(names):
        if temperature is None:
            if model is None or domain is None:
                raise ValueError("give a temperature or a model and domain index")
            temperature = float(model.temperatures[domain])
        return _temperature_parameters(names, x, float(temperature))
    if temperature is not None:
        raise ValueError("temperature predictions need the temperature model")
    n_modes = getattr(model, "n_modes", None)
    return _domain_parameters(names, x, int(domain or 0), n_modes)


def frf_draws(wn, zeta, amp, omega, chunk=256) -> np.ndarray:
    """Real-part FRFs for a batch of parameter draws, shape ``(S, N)``."""
    out = np.empty((wn.shape[0], omega.size))
    for s in range(0, wn.shape[0], chunk):
        sl = slice(s, s + chunk)
        a = wn[sl, None, :] ** 2 - omega[None, :, None] ** 2
        b = 2.0 * zeta[sl, None, :] * omega[None, :, None] * wn[sl, None, :]
        out[sl] = -(omega ** 2)[None, :] * np.sum(amp[sl, None, :] * a / (a * a + b * b), axis=-1)
    return out


def posterior_predictive_frf(trace: Trace, model, grid, domain: Optional[int] = 0,
                             temperature: Optional[float] = None, composition: str = "literal",
                             max_draws: Optional[int] = None, seed=0) -> PredictiveBand:
    """Mean real-part FRF over posterior draws with a 3-sigma band.

    Domain ``k`` parameters are read from the trace by name, so a trace
    loaded from CSV works too; ``model`` is only consulted for the mode
    count and, for the temperature model, the domain temperature.

    ``composition="literal"`` uses ``3 * (sd_curve + sqrt(E[sigma2_H]))``;
    ``"variance"`` uses ``3 * sqrt(sd_curve**2 + E[sigma2_H])``.
    """
    omega = _as_omega(grid)
    wn, zeta, amp, noise = _predictive_parameters(model, trace, domain, temperature,
                                                  max_draws, seed)
    amp = np.broadcast_to(amp, wn.shape)
    curves = frf_draws(wn, zeta, amp, omega)
    mean = curves.mean(axis=0)
    sd = curves.std(axis=0)
    noise_sd = float(np.sqrt(np.mean(noise)))
    if composition == "literal":
        half = 3.0 * (sd + noise_sd)
    elif composition == "variance":
        half = 3.0 * np.sqrt(sd * sd + noise_sd * noise_sd)
    else:
        raise ValueError("composition must be 'literal' or 'variance'")
    return PredictiveBand(omega, mean, mean - half, mean + half, sd, noise_sd)


# ---------------------------------------------------------------------------
# Temperature extrapolation

_TEMPERATURE_NODES = ("mu_omega", "a1", "a2", "mu_zeta", "b")


@dataclass
class TemperaturePrediction:
    temperature: float
    modes: ModalParameterSet
    frequency_band: Optional[tuple] = None  # (lower, upper) per mode
    damping_band: Optional[tuple] = None


def _node_columns(names: Sequence[str], node: str):
    pattern = re.compile(rf"^{re.escape(node)}(\[(\d+)\])?$")
    hits = sorted(((int(m.group(2) or 1), i) for i, n in enumerate(names)
                   if (m := pattern.match(n))))
    return [i for _, i in hits]


def _expectations(source):
    if isinstance(source, Trace):
        names, means, trace = source.names, source.constrained.reshape(-1, source.dim).mean(0), source
    elif isinstance(source, PosteriorSummary):
        names, means, trace = source.names, source.mean, None
    elif isinstance(source, dict):
        names = list(source)
        means = np.array([np.mean(source[n]) for n in names], dtype=float)
        trace = None
    else:
        raise TypeError("expected a Trace, PosteriorSummary or mapping of expectations")
    cols = {node: _node_columns(names, node) for node in _TEMPERATURE_NODES + ("A",)}
    missing = [n for n in _TEMPERATURE_NODES if not cols[n]]
    if missing:
        raise ValueError(f"not a temperature-model layout; missing {missing}")
    exp = {n: np.asarray(means)[c] for n, c in cols.items() if c}
    return exp, trace, cols


def extrapolate_temperature(source, temperatures, bands: bool = False, residue=None):
    """Modal parameters at arbitrary temperatures.

    Point values substitute posterior expectations into
    ``wn = mu_omega + a1 T + a2 T**2`` and ``zeta = mu_zeta + b T``. With
    ``bands`` (needs a trace) the laws are applied per draw and
    ``mean +/- 3 sd`` of the results is reported.
    """
    exp, trace, cols = _expectations(source)
    if bands and trace is None:
        raise ValueError("bands need posterior draws")
    amp = exp.get("A") if residue is None else np.atleast_1d(residue)
    if amp is None:
        amp = np.zeros_like(exp["mu_omega"])
    out = []
    for T in np.asarray(temperatures, dtype=float).ravel():
        wn = exp["mu_omega"] + exp["a1"] * T + exp["a2"] * T * T
        zeta = exp["mu_zeta"] + exp["b"] * T
        pred = TemperaturePrediction(float(T), ModalParameterSet.from_arrays(wn, zeta, amp))
        if bands:
            d = {n: trace.constrained[:, :, c].reshape(-1, len(c)) for n, c in cols.items() if c}
            wn_s = d["mu_omega"] + d["a1"] * T + d["a2"] * T * T
            zeta_s = d["mu_zeta"] + d["b"] * T
            pred.frequency_band = (wn_s.mean(0) - 3 * wn_s.std(0), wn_s.mean(0) + 3 * wn_s.std(0))
            pred.damping_band = (zeta_s.mean(0) - 3 * zeta_s.std(0),
                                 zeta_s.mean(0) + 3 * zeta_s.std(0))
        out.append(pred)
    return out


# ---------------------------------------------------------------------------
# Scoring


def nmse(test, prediction) -> float:
    """Normalised mean-squared error in percent, ``100/(N var(y)) sum (y - y*)^2``.

    ``var(y)`` is the population variance of the test values.
    """
    y = np.asarray(test, dtype=float).ravel()
    yp = np.asarray(prediction, dtype=float).ravel()
    if y.size == 0 or y.size != yp.size:
        raise ValueError("test and prediction must have the same non-zero length")
    var = np.var(y)
    if var == 0:
        raise ValueError("test data are constant; NMSE is undefined")
    return float(100.0 / (y.size * var) * np.sum((y - yp) ** 2))


def point_estimate_frf(params: ModalParameterSet, grid) -> np.ndarray:
    return frf_real(params, grid)


__all__ = [
    "DiagnosticError", "rhat_ess", "effective_sample_size", "mcse_mean", "PosteriorSummary",
    "summarize", "KdeCurve", "kde", "silverman_bandwidth", "FAMILIES", "two_stage_draws",
    "population_marginal", "domain_marginal", "PredictiveBand", "frf_draws",
    "posterior_predictive_frf", "TemperaturePrediction", "extrapolate_temperature", "nmse",
    "point_estimate_frf", "FrequencyGrid",
]
