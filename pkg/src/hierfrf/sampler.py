"""No-U-Turn Hamiltonian Monte Carlo with warm-up adaptation.

The transition is multinomial NUTS: trajectories double in a random direction,
states inside a subtree are chosen with weights ``exp(-H)``, the top level uses
biased progressive sampling, and termination follows the generalised U-turn
criterion including the checks across subtree boundaries. Warm-up tunes the
step size by dual averaging and a diagonal inverse mass matrix over doubling
windows.

A target is any object with ``dim`` and ``log_density_and_gradient(u)``;
``names``, ``initial_point(rng)`` and ``constrain_flat(u)`` are used when
present.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import _nuts_compiled

log = logging.getLogger(__name__)

_LOG_08 = np.log(0.8)


class SamplerError(RuntimeError):
    """Sampling could not proceed; ``report`` carries diagnostics."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup_draws: int = 5000
    sampling_draws: int = 10000
    target_accept: float = 0.99
    max_tree_depth: int = 10
    divergence_energy_threshold: float = 1000.0
    seed: int = 0
    init_buffer: float = 0.15
    term_buffer: float = 0.10
    base_window: int = 25
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75
    init_step_size: float = 1.0
    init_jitter: float = 0.1
    n_jobs: int = 1
    compiled: bool = True

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be positive")
        if self.sampling_draws < 1:
            raise ValueError("sampling_draws must be positive")
        if self.warmup_draws < 0:
            raise ValueError("warmup_draws must be non-negative")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_tree_depth < 1:
            raise ValueError("max_tree_depth must be at least 1")
        if self.divergence_energy_threshold <= 0:
            raise ValueError("divergence_energy_threshold must be positive")
        if not (0 <= self.init_buffer < 1 and 0 <= self.term_buffer < 1
                and self.init_buffer + self.term_buffer < 1):
            raise ValueError("warm-up buffers must be fractions summing below 1")
        if self.base_window < 1 or self.init_step_size <= 0:
            raise ValueError("base_window and init_step_size must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "SamplerConfig":
        if not d:
            return cls()
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown sampler settings: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# Hamiltonian dynamics


class _State:
    __slots__ = ("q", "p", "lp", "grad")

    def __init__(self, q, p, lp, grad):
        self.q, self.p, self.lp, self.grad = q, p, lp, grad

    def copy(self):
        return _State(self.q, self.p, self.lp, self.grad)


def _evaluate(model, q):
    lp, g = model.log_density_and_gradient(q)
    lp = float(lp)
    if not np.isfinite(lp):
        return -np.inf, np.zeros_like(q)
    return lp, np.asarray(g, dtype=float)


def _hamiltonian(z: _State, inv_mass) -> float:
    return -z.lp + 0.5 * float(np.dot(z.p * inv_mass, z.p))


def _step(z: _State, eps, inv_mass, model) -> _State:
    p = z.p + 0.5 * eps * z.grad
    q = z.q + eps * inv_mass * p
    lp, g = _evaluate(model, q)
    return _State(q, p + 0.5 * eps * g, lp, g)


def leapfrog(theta, momentum, step_size, model, inv_mass=None):
    """One velocity-Verlet step for ``H = -log pi(q) + p' M^-1 p / 2``.

    Returns ``(theta', momentum')``; a non-finite density leaves zero
    gradient so the caller sees an infinite energy.
    """
    theta = np.asarray(theta, dtype=float)
    momentum = np.asarray(momentum, dtype=float)
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(momentum))):
        raise ValueError("leapfrog needs a finite state")
    inv_mass = np.ones_like(theta) if inv_mass is None else np.asarray(inv_mass, dtype=float)
    lp, g = _evaluate(model, theta)
    z = _step(_State(theta, momentum, lp, g), float(step_size), inv_mass, model)
    return z.q, z.p


def energy(theta, momentum, model, inv_mass=None) -> float:
    theta = np.asarray(theta, dtype=float)
    inv_mass = np.ones_like(theta) if inv_mass is None else np.asarray(inv_mass, dtype=float)
    lp, _ = _evaluate(model, theta)
    return _hamiltonian(_State(theta, np.asarray(momentum, dtype=float), lp, None), inv_mass)


# ---------------------------------------------------------------------------
# NUTS transition


_MASK64 = (1 << 64) - 1


class _SplitMix:
    """SplitMix64 uniforms; the compiled transition uses the same stream."""

    __slots__ = ("state",)

    def __init__(self, seed):
        self.state = int(seed) & _MASK64

    def uniform(self) -> float:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
        return (z >> 11) * (1.0 / 9007199254740992.0)


def _no_u_turn(p_sharp_minus, p_sharp_plus, rho) -> bool:
    return float(np.dot(p_sharp_plus, rho)) > 0 and float(np.dot(p_sharp_minus, rho)) > 0


class _Tree:
    """Mutable scratch for one transition."""

    def __init__(self, model, inv_mass, eps, h0, threshold, rng):
        self.model, self.inv_mass, self.eps = model, inv_mass, eps
        self.h0, self.threshold, self.rng = h0, threshold, rng
        self.n_leapfrog = 0
        self.sum_metro = 0.0
        self.divergent = False

    def build(self, depth, z, sign):
        """Extend ``z`` by ``2**depth`` leapfrog steps.

        Returns ``(valid, z_end, proposal, log_weight, rho, p_beg, p_end,
        p_sharp_beg, p_sharp_end)``; ``z_end`` is the outermost state.
        """
        if depth == 0:
            z = _step(z, sign * self.eps, self.inv_mass, self.model)
            self.n_leapfrog += 1
            h = _hamiltonian(z, self.inv_mass)
            if np.isnan(h):
                h = np.inf
            if h - self.h0 > self.threshold:
                self.divergent = True
            dh = self.h0 - h
            self.sum_metro += 1.0 if dh > 0 else np.exp(dh)
            p_sharp = self.inv_mass * z.p
            return (not self.divergent, z, z, dh, z.p.copy(), z.p, z.p, p_sharp, p_sharp)

        (ok, z, prop_init, lw_init, rho_init, p_beg, p_init_end, ps_beg,
         ps_init_end) = self.build(depth - 1, z, sign)
        if not ok:
            return (False, z, prop_init, lw_init, rho_init, p_beg, p_init_end, ps_beg,
                    ps_init_end)
        (ok, z, prop_final, lw_final, rho_final, p_final_beg, p_end, ps_final_beg,
         ps_end) = self.build(depth - 1, z, sign)
        if not ok:
            return (False, z, prop_final, lw_final, rho_final, p_beg, p_end, ps_beg, ps_end)

        lw = np.logaddexp(lw_init, lw_final)
        proposal = prop_final
        if self.rng.uniform() > np.exp(lw_final - lw):
            proposal = prop_init
        rho = rho_init + rho_final
        persist = (_no_u_turn(ps_beg, ps_end, rho)
                   and _no_u_turn(ps_beg, ps_final_beg, rho_init + p_final_beg)
                   and _no_u_turn(ps_init_end, ps_end, rho_final + p_init_end))
        return (persist, z, proposal, lw, rho, p_beg, p_end, ps_beg, ps_end)


@dataclass
class TransitionStats:
    accept_stat: float
    tree_depth: int
    n_leapfrog: int
    divergent: bool
    energy: float
    log_density: float


def _transition(z0: _State, eps, inv_mass, model, rng, max_depth, threshold, compiled=None):
    """Momentum comes from ``rng``; tree-building uniforms from a SplitMix
    stream seeded by one draw of ``rng``."""
    p0 = rng.standard_normal(z0.q.shape) / np.sqrt(inv_mass)
    seed = int(rng.integers(0, 2**64, dtype=np.uint64))
    if compiled is not None:
        fn, data = compiled
        q, g, lp, accept, depth, n_leap, divergent, h = _nuts_compiled.nuts_transition(
            z0.q, z0.lp, z0.grad, p0, float(eps), inv_mass, int(max_depth), float(threshold),
            np.uint64(seed), fn, data)
        stats = TransitionStats(accept_stat=float(accept), tree_depth=int(depth),
                                n_leapfrog=int(n_leap), divergent=bool(divergent),
                                energy=float(h), log_density=float(lp))
        return _State(q, None, float(lp), g), stats
    z0 = z0.copy()
    z0.p = p0
    rng = _SplitMix(seed)
    h0 = _hamiltonian(z0, inv_mass)
    tree = _Tree(model, inv_mass, eps, h0, threshold, rng)

    z_fwd = z_bck = z_sample = z0
    p_sharp0 = inv_mass * z0.p
    p_fwd_fwd = p_fwd_bck = p_bck_fwd = p_bck_bck = z0.p
    ps_fwd_fwd = ps_fwd_bck = ps_bck_fwd = ps_bck_bck = p_sharp0
    rho = z0.p.copy()
    log_weight = 0.0
    depth = 0
    # a depth budget of zero still takes one leapfrog step, which makes the
    # transition a plain Metropolis-adjusted leapfrog proposal
    budget = max(int(max_depth), 1)
    while depth < budget:
        if rng.uniform() > 0.5:
            rho_bck = rho
            p_bck_fwd, ps_bck_fwd = p_fwd_bck, ps_fwd_bck
            (ok, z_fwd, proposal, lw_sub, rho_fwd, p_fwd_bck, p_fwd_fwd, ps_fwd_bck,
             ps_fwd_fwd) = tree.build(depth, z_fwd, 1.0)
        else:
            rho_fwd = rho
            p_fwd_bck, ps_fwd_bck = p_bck_fwd, ps_bck_fwd
            (ok, z_bck, proposal, lw_sub, rho_bck, p_bck_fwd, p_bck_bck, ps_bck_fwd,
             ps_bck_bck) = tree.build(depth, z_bck, -1.0)
        if not ok:
            break
        depth += 1
        if lw_sub > log_weight or rng.uniform() < np.exp(lw_sub - log_weight):
            z_sample = proposal
        log_weight = np.logaddexp(log_weight, lw_sub)
        rho = rho_bck + rho_fwd
        persist = (_no_u_turn(ps_bck_bck, ps_fwd_fwd, rho)
                   and _no_u_turn(ps_bck_bck, ps_fwd_bck, rho_bck + p_fwd_bck)
                   and _no_u_turn(ps_bck_fwd, ps_fwd_fwd, rho_fwd + p_bck_fwd))
        if not persist:
            break

    accept = tree.sum_metro / max(tree.n_leapfrog, 1)
    stats = TransitionStats(accept_stat=float(accept), tree_depth=depth,
                            n_leapfrog=tree.n_leapfrog, divergent=tree.divergent,
                            energy=_hamiltonian(z_sample, inv_mass), log_density=z_sample.lp)
    return z_sample, stats


def _compiled_target(model):
    getter = getattr(model, "compiled_target", None)
    return getter() if getter is not None else None


def nuts_draw(theta, step_size, mass_diag, model, rng, max_tree_depth=10,
              divergence_energy_threshold=1000.0, compiled=False):
    """One multinomial NUTS transition from ``theta``.

    ``mass_diag`` is the diagonal of the inverse mass matrix (the metric the
    momenta are scaled by). ``compiled`` switches to the numba transition
    when the model provides one. Returns ``(theta_next, TransitionStats)``.
    """
    theta = np.asarray(theta, dtype=float)
    lp, g = _evaluate(model, theta)
    z = _State(theta, np.zeros_like(theta), lp, g)
    inv_mass = np.ones_like(theta) if mass_diag is None else np.asarray(mass_diag, dtype=float)
    target = _compiled_target(model) if compiled else None
    z, stats = _transition(z, float(step_size), inv_mass, model, rng, max_tree_depth,
                           divergence_energy_threshold, target)
    return z.q, stats


# ---------------------------------------------------------------------------
# Adaptation


class DualAveraging:
    def __init__(self, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.restart(1.0)

    def restart(self, step_size):
        self.mu = np.log(10.0 * step_size)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def update(self, accept_stat) -> float:
        self.counter += 1
        accept_stat = min(1.0, accept_stat)
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept_stat)
        x = self.mu - self.s_bar * np.sqrt(self.counter) / self.gamma
        x_eta = self.counter ** (-self.kappa)
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x
        return float(np.exp(x))

    def final(self) -> float:
        return float(np.exp(self.x_bar))


class WindowSchedule:
    """Metric-estimation windows inside the warm-up.

    Leaves ``init_buffer`` and ``term_buffer`` fractions for step-size-only
    adaptation and fills the middle with windows that double in length; the
    last window absorbs any remainder.
    """

    def __init__(self, n_warmup, init_buffer=0.15, term_buffer=0.10, base_window=25):
        self.n = n_warmup
        self.init = int(np.floor(init_buffer * n_warmup))
        self.term = int(np.floor(term_buffer * n_warmup))
        self.base = max(0, min(base_window, n_warmup - self.init - self.term))
        self.enabled = n_warmup >= 20 and self.base > 0

    def windows(self):
        """List of ``(start, end)`` iteration ranges, end exclusive."""
        if not self.enabled:
            return []
        last = self.n - self.term
        out, start, size = [], self.init, self.base
        while start < last:
            end = start + size
            if end + 2 * size > last:
                end = last
            out.append((start, end))
            start, size = end, size * 2
        return out


def _regularised_variance(samples: np.ndarray) -> np.ndarray:
    n = samples.shape[0]
    var = np.var(samples, axis=0, ddof=1)
    return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


def find_reasonable_step_size(z: _State, eps, inv_mass, model, rng) -> float:
    """Double or halve ``eps`` until one leapfrog step crosses acceptance 0.8."""

    def delta_h(e):
        w = z.copy()
        w.p = rng.standard_normal(w.q.shape) / np.sqrt(inv_mass)
        h0 = _hamiltonian(w, inv_mass)
        h = _hamiltonian(_step(w, e, inv_mass, model), inv_mass)
        return h0 - (np.inf if np.isnan(h) else h)

    direction = 1 if delta_h(eps) > _LOG_08 else -1
    for _ in range(200):
        dh = delta_h(eps)
        if direction == 1 and not dh > _LOG_08:
            break
        if direction == -1 and not dh < _LOG_08:
            break
        eps = eps * 2.0 if direction == 1 else eps * 0.5
        if eps > 1e7:
            raise SamplerError("posterior appears improper: step size diverged upwards")
        if eps < 1e-300:
            raise SamplerError("no acceptable step size found")
    return float(eps)


# ---------------------------------------------------------------------------
# Driver


_STAT_FIELDS = ("accept_stat", "tree_depth", "n_leapfrog", "divergent", "energy", "log_density")


@dataclass
class Trace:
    """Posterior draws (unconstrained) and per-draw sampler statistics.

    Arrays are ``(chains, draws[, dim])``. ``warmup`` holds the same
    statistics for the discarded warm-up iterations.
    """

    names: list
    draws: np.ndarray
    constrained: np.ndarray
    accept_stat: np.ndarray
    tree_depth: np.ndarray
    n_leapfrog: np.ndarray
    divergent: np.ndarray
    energy: np.ndarray
    log_density: np.ndarray
    step_size: np.ndarray
    inv_mass: np.ndarray
    warmup: dict = field(default_factory=dict)
    config: Optional[SamplerConfig] = None

    @classmethod
    def from_constrained(cls, names, constrained, divergent=None, energy=None) -> "Trace":
        """Trace holding only constrained values, e.g. read back from CSV."""
        x = np.asarray(constrained, dtype=float)
        if x.ndim != 3 or x.shape[2] != len(names):
            raise ValueError("constrained must be (chains, draws, len(names))")
        shape = x.shape[:2]
        nan = np.full(shape, np.nan)
        return cls(names=list(names), draws=np.full(x.shape, np.nan), constrained=x,
                   accept_stat=nan, tree_depth=np.zeros(shape, int),
                   n_leapfrog=np.zeros(shape, int),
                   divergent=np.zeros(shape, bool) if divergent is None else divergent,
                   energy=nan if energy is None else energy, log_density=nan,
                   step_size=np.full(shape[0], np.nan),
                   inv_mass=np.full((shape[0], x.shape[2]), np.nan))

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    @property
    def dim(self) -> int:
        return self.draws.shape[2]

    def index(self, name) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no parameter named {name!r}") from None

    def values(self, name) -> np.ndarray:
        """Constrained draws of one coordinate, shape ``(chains, draws)``."""
        return self.constrained[:, :, self.index(name)]

    def pooled(self) -> np.ndarray:
        """Constrained draws with chains stacked, ``(chains * draws, dim)``."""
        return self.constrained.reshape(-1, self.dim)

    @property
    def divergence_rate(self) -> float:
        return float(np.mean(self.divergent))

    def adaptation_summary(self) -> dict:
        return {
            "names": list(self.names),
            "step_size": self.step_size.tolist(),
            "inv_mass_diag": self.inv_mass.tolist(),
            "mean_accept_stat": self.accept_stat.mean(axis=1).tolist(),
            "divergences": self.divergent.sum(axis=1).astype(int).tolist(),
            "warmup_divergences": (np.asarray(self.warmup["divergent"]).sum(axis=1)
                                   .astype(int).tolist() if "divergent" in self.warmup else []),
            "max_tree_depth_hits": (self.tree_depth >= (self.config.max_tree_depth
                                                        if self.config else 10))
            .sum(axis=1).astype(int).tolist(),
            "config": self.config.to_dict() if self.config else None,
        }

    def write_csv(self, path):
        """One row per draw: chain, draw, divergent, energy, then constrained values."""
        header = ["chain", "draw", "divergent", "energy"] + list(self.names)
        # names such as omega_nat[1,2] contain commas and are quoted
        lines = [",".join(f'"{h}"' if "," in h else h for h in header)]
        for c in range(self.n_chains):
            for d in range(self.n_draws):
                row = [str(c + 1), str(d + 1), str(int(self.divergent[c, d])),
                       format_float(self.energy[c, d])]
                row += [format_float(v) for v in self.constrained[c, d]]
                lines.append(",".join(row))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    def write_adaptation_json(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.adaptation_summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def format_float(x) -> str:
    return format(float(x), ".17g")


def concatenate_traces(traces, prefixes=None) -> Trace:
    """Stack independently sampled traces along the parameter axis."""
    prefixes = prefixes or [""] * len(traces)
    names = [p + n for t, p in zip(traces, prefixes) for n in t.names]
    cat = lambda attr: np.concatenate([getattr(t, attr) for t in traces], axis=-1)  # noqa: E731
    first = traces[0]
    return Trace(
        names=names, draws=cat("draws"), constrained=cat("constrained"),
        accept_stat=np.mean([t.accept_stat for t in traces], axis=0),
        tree_depth=np.max([t.tree_depth for t in traces], axis=0),
        n_leapfrog=np.sum([t.n_leapfrog for t in traces], axis=0),
        divergent=np.any([t.divergent for t in traces], axis=0),
        energy=np.sum([t.energy for t in traces], axis=0),
        log_density=np.sum([t.log_density for t in traces], axis=0),
        step_size=first.step_size, inv_mass=cat("inv_mass"),
        warmup={k: np.any([t.warmup[k] for t in traces], axis=0)
                for k in ("divergent",) if all(k in t.warmup for t in traces)},
        config=first.config,
    )


def _initial_state(model, rng, config: SamplerConfig) -> _State:
    for _ in range(100):
        if hasattr(model, "initial_point"):
            try:
                q = np.asarray(model.initial_point(rng, config.init_jitter), dtype=float)
            except TypeError:
                q = np.asarray(model.initial_point(rng), dtype=float)
        else:
            q = rng.uniform(-2.0, 2.0, size=model.dim)
        lp, g = _evaluate(model, q)
        if np.isfinite(lp) and np.all(np.isfinite(g)):
            return _State(q, np.zeros_like(q), lp, g)
    raise SamplerError("could not find an initial point with finite log density")


def _run_chain(model, config: SamplerConfig, seed_seq) -> dict:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    z = _initial_state(model, rng, config)
    dim = z.q.shape[0]
    inv_mass = np.ones(dim)
    eps = find_reasonable_step_size(z, config.init_step_size, inv_mass, model, rng)
    averager = DualAveraging(config.target_accept, config.gamma, config.t0, config.kappa)
    averager.restart(eps)

    n_warm, n_samp = config.warmup_draws, config.sampling_draws
    windows = dict(WindowSchedule(n_warm, config.init_buffer, config.term_buffer,
                                  config.base_window).windows())
    window_start = {end: start for start, end in windows.items()}
    warm_q = np.empty((n_warm, dim))
    warm_stats = {k: np.empty(n_warm) for k in _STAT_FIELDS}
    warm_eps = np.empty(n_warm)
    target = _compiled_target(model) if config.compiled else None

    for it in range(n_warm):
        z, st = _transition(z, eps, inv_mass, model, rng, config.max_tree_depth,
                            config.divergence_energy_threshold, target)
        warm_q[it] = z.q
        warm_eps[it] = eps
        for k in _STAT_FIELDS:
            warm_stats[k][it] = getattr(st, k)
        eps = averager.update(st.accept_stat)
        if it + 1 in window_start:
            inv_mass = _regularised_variance(warm_q[window_start[it + 1]:it + 1])
            if not np.all(np.isfinite(inv_mass)):
                raise SamplerError("non-finite variance estimate during warm-up")
            eps = find_reasonable_step_size(z, eps, inv_mass, model, rng)
            averager.restart(eps)
    if n_warm:
        if np.all(warm_stats["divergent"] > 0):
            raise SamplerError("every warm-up transition diverged", {
                "step_size": eps, "mean_accept_stat": float(np.mean(warm_stats["accept_stat"])),
                "final_position": z.q.tolist()})
        eps = averager.final()

    draws = np.empty((n_samp, dim))
    stats = {k: np.empty(n_samp) for k in _STAT_FIELDS}
    for it in range(n_samp):
        z, st = _transition(z, eps, inv_mass, model, rng, config.max_tree_depth,
                            config.divergence_energy_threshold, target)
        draws[it] = z.q
        for k in _STAT_FIELDS:
            stats[k][it] = getattr(st, k)
    return {"draws": draws, "stats": stats, "step_size": eps, "inv_mass": inv_mass,
            "warmup": {"draws": warm_q, "step_size": warm_eps, **warm_stats}}


def _run_chain_job(args):
    return _run_chain(*args)


def adapt_and_sample(model, config: SamplerConfig | None = None) -> Trace:
    """Warm up and sample ``config.chains`` independent chains.

    Chain ``c`` draws from the ``c``-th child of ``SeedSequence(seed)``
    through a Philox generator, so results do not depend on how chains are
    scheduled. ``n_jobs > 1`` runs chains in worker processes.
    """
    config = config or SamplerConfig()
    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    jobs = [(model, config, s) for s in seeds]
    if config.n_jobs > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.n_jobs, config.chains)) as pool:
            results = list(pool.map(_run_chain_job, jobs))
    else:
        results = [_run_chain_job(j) for j in jobs]

    draws = np.stack([r["draws"] for r in results])
    constrain = getattr(model, "constrain_flat", None)
    constrained = constrain(draws) if constrain is not None else draws.copy()
    names = list(getattr(model, "names", [f"x[{i + 1}]" for i in range(draws.shape[2])]))
    stacked = {k: np.stack([r["stats"][k] for r in results]) for k in _STAT_FIELDS}
    warm = {k: np.stack([r["warmup"][k] for r in results])
            for k in results[0]["warmup"]}
    warm["divergent"] = warm["divergent"].astype(bool)
    warm["tree_depth"] = warm["tree_depth"].astype(int)
    warm["n_leapfrog"] = warm["n_leapfrog"].astype(int)
    trace = Trace(
        names=names, draws=draws, constrained=constrained,
        accept_stat=stacked["accept_stat"],
        tree_depth=stacked["tree_depth"].astype(int),
        n_leapfrog=stacked["n_leapfrog"].astype(int),
        divergent=stacked["divergent"].astype(bool),
        energy=stacked["energy"], log_density=stacked["log_density"],
        step_size=np.array([r["step_size"] for r in results]),
        inv_mass=np.stack([r["inv_mass"] for r in results]),
        warmup=warm, config=config,
    )
    log.info("sampled %d chains x %d draws; divergences=%d; mean accept=%.3f",
             trace.n_chains, trace.n_draws, int(trace.divergent.sum()),
             float(trace.accept_stat.mean()))
    return trace
