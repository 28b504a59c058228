"""Hierarchical FRF models exposing log-density and gradient in unconstrained space.

Two families are provided:

* :class:`PopulationFRFModel` -- K nominally identical structures, domain-level
  natural frequencies and damping drawn from learnt population distributions,
  residues and noise variance shared.
* :class:`TemperatureFRFModel` -- one structure observed at K temperatures,
  with natural frequency quadratic and damping linear in temperature.

Both use a Gaussian likelihood on the real part of the modal accelerance.
"""

from __future__ import annotations

import numpy as np

from ..modal import real_part_and_partials
from . import _kernels
from .distributions import (
    LOG_2PI,
    PriorSpec,
    beta_logpdf,
    normal_logpdf,
    truncated_normal_logpdf,
)
from .layout import ParameterLayout
from .specs import FrfDataset, HierarchySpec, PoolingMode, TemperatureSpec


_POP_PRIORS = ("mu_omega", "sigma2_omega", "alpha_zeta", "beta_zeta", "mu_A", "sigma2_A",
               "mu_noise", "sigma2_noise")
_TEMP_PRIORS = ("mu_omega", "mu_zeta", "a1", "a2", "b", "sigma2_H", "mu_A", "sigma2_A")


class ModelSpecError(ValueError):
    pass


def _gaussian_loglik(y, f, var):
    r = y - f
    return -0.5 * np.sum(LOG_2PI + np.log(var) + r * r / var), r


class _FrfModelBase:
    """Shared plumbing: flattened data, density evaluation, initialisation."""

    layout: ParameterLayout

    def __init__(self, data: FrfDataset):
        self.data = data
        self._w, self._y, self._k = data.flat()
        n_dom = data.n_domains
        # one-hot (K, N) for per-domain reductions of per-point gradients
        self._onehot = (self._k[None, :] == np.arange(n_dom)[:, None]).astype(float)

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def names(self) -> list[str]:
        return self.layout.coordinate_names()

    def constrain(self, u) -> dict:
        return self.layout.constrain(u)

    def constrain_flat(self, u) -> np.ndarray:
        """Constrained values in coordinate-name order; keeps batch dims."""
        u = np.asarray(u, dtype=float)
        values = self.layout.constrain(u)
        lead = u.shape[:-1]
        return np.concatenate([np.reshape(values[b.name], lead + (b.size,))
                               for b in self.layout.blocks], axis=-1)

    def unconstrain(self, values: dict) -> np.ndarray:
        return self.layout.unconstrain(values)

    use_compiled = False

    def log_density_and_gradient(self, u):
        """Log posterior (up to a constant) plus log|J| and its gradient.

        Non-finite states return ``(-inf, zeros)``; the sampler treats them as
        divergent.
        """
        u = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u)):
            return -np.inf, np.zeros(self.dim)
        if self.use_compiled:
            lp, g = self._compiled(u)
            return float(lp), g
        return self.reference_log_density_and_gradient(u)

    def reference_log_density_and_gradient(self, u):
        """Vectorised numpy evaluation, kept as the readable reference."""
        u = np.asarray(u, dtype=float)
        values, log_j = self.layout.constrain_with_log_jacobian(u)
        with np.errstate(all="ignore"):
            lp, grads = self._log_joint_and_grads(values)
            if not np.isfinite(lp):
                return -np.inf, np.zeros(self.dim)
            g = self.layout.pullback(u, values, grads)
        if not np.all(np.isfinite(g)):
            return -np.inf, np.zeros(self.dim)
        return float(lp + log_j), g

    def log_density(self, u) -> float:
        return self.log_density_and_gradient(u)[0]

    def log_likelihood(self, values: dict) -> float:
        with np.errstate(all="ignore"):
            return float(self._likelihood(values)[0])

    def log_prior(self, values: dict) -> float:
        with np.errstate(all="ignore"):
            return float(self._prior(values)[0])

    def _log_joint_and_grads(self, values):
        ll, g_ll = self._likelihood(values)
        lp, g_lp = self._prior(values)
        grads = dict(g_lp)
        for name, g in g_ll.items():
            grads[name] = grads.get(name, 0.0) + g
        return ll + lp, grads

    def initial_values(self) -> dict:
        raise NotImplementedError

    def initial_point(self, rng, jitter: float = 0.1) -> np.ndarray:
        """Prior centres perturbed by a relative U(-jitter, jitter) factor.

        For log-transformed coordinates this is an additive shift of about
        ``jitter`` in unconstrained space.
        """
        values = self.initial_values()
        if jitter:
            for b in self.layout.blocks:
                x = np.asarray(values[b.name], dtype=float)
                x = x * (1.0 + rng.uniform(-jitter, jitter, size=x.shape))
                if b.transform == "ordered":
                    x = np.sort(x, axis=-1)
                values[b.name] = x
        return self.unconstrain(values)


def _acc(grads, name, value):
    grads[name] = grads.get(name, 0.0) + value


class PopulationFRFModel(_FrfModelBase):
    """Partial-pooling model for K structures with M modes each.

    With ``pooling=complete_pooling`` all observations are merged into a single
    domain before the layout is built.
    """

    def __init__(self, data: FrfDataset, spec: HierarchySpec | None = None,
                 pooling=PoolingMode.PARTIAL_POOLING):
        pooling = PoolingMode.parse(pooling)
        if pooling is PoolingMode.NO_POOLING and data.n_domains > 1:
            raise ModelSpecError("use NoPoolingModel (or build_model) for independent domains")
        if pooling is PoolingMode.COMPLETE_POOLING:
            data = data.merged()
        super().__init__(data)
        self.spec = spec or HierarchySpec()
        self.pooling = pooling
        self.n_domains = data.n_domains
        self.n_modes = self.spec.n_modes
        K, M = self.n_domains, self.n_modes
        lay = ParameterLayout()
        lay.add("mu_omega", (M,), "positive", "hyper")
        lay.add("sigma2_omega", (M,), "positive", "hyper")
        lay.add("alpha_zeta", (M,), "positive", "hyper")
        lay.add("beta_zeta", (M,), "positive", "hyper")
        lay.add("mu_A", (M,), "real", "hyper")
        lay.add("sigma2_A", (M,), "positive", "hyper")
        lay.add("mu_noise", (), "positive", "hyper")
        lay.add("sigma2_noise", (), "positive", "hyper")
        wn_transform = "ordered" if self.spec.ordered_frequencies and M > 1 else "positive"
        lay.add("omega_nat", (K, M), wn_transform, "domain")
        lay.add("zeta", (K, M), "unit", "domain")
        lay.add("A", (M,) if self.spec.shared_residues else (K, M), "real", "shared")
        lay.add("sigma2_H", () if self.spec.shared_noise else (K,), "positive", "shared")
        self.layout = lay
        priors = [self.spec.prior(name) for name in _POP_PRIORS]
        self.use_compiled = (
            self.spec.shared_residues and self.spec.shared_noise
            and all(p.kind != "truncated_normal" or p.lower == 0.0 for p in priors)
        )
        if self.use_compiled:
            self._table = _kernels.prior_table(priors, M)
            self._ordered = wn_transform == "ordered"

    def _compiled(self, u):
        kind, loc, var = self._table
        return _kernels.population_logp_grad(
            u, self.n_domains, self.n_modes, self._ordered, kind, loc, var,
            self._w, self._y, self._k)

    def compiled_target(self):
        """``(fn, data)`` for the compiled sampler, or ``None``."""
        if not self.use_compiled:
            return None
        kind, loc, var = self._table
        return _kernels.population_target, (
            self.n_domains, self.n_modes, self._ordered, kind, loc, var,
            self._w, self._y, self._k)

    # -- density pieces ------------------------------------------------------
    def domain_parameters(self, values: dict, k: int):
        """``(wn, zeta, A)`` of domain ``k``; arrays keep any leading batch dims."""
        wn = values["omega_nat"][..., k, :]
        zeta = values["zeta"][..., k, :]
        amp = values["A"] if self.spec.shared_residues else values["A"][..., k, :]
        return wn, zeta, amp

    def noise_variance(self, values: dict, k: int = 0):
        s2 = values["sigma2_H"]
        return s2 if self.spec.shared_noise else s2[..., k]

    def _likelihood(self, values):
        k = self._k
        wn = values["omega_nat"][k]
        zeta = values["zeta"][k]
        amp = values["A"] if self.spec.shared_residues else values["A"][k]
        s2 = values["sigma2_H"] if self.spec.shared_noise else values["sigma2_H"][k]
        if np.any(s2 <= 0):
            raise ArithmeticError("noise variance must be positive")
        amp_pts = np.broadcast_to(amp, wn.shape)
        f, d_wn, d_zeta, d_amp = real_part_and_partials(wn, zeta, amp_pts, self._w)
        ll, r = _gaussian_loglik(self._y, f, s2)
        score = r / s2
        grads = {
            "omega_nat": self._onehot @ (score[:, None] * d_wn),
            "zeta": self._onehot @ (score[:, None] * d_zeta),
        }
        g_amp = score[:, None] * d_amp
        grads["A"] = g_amp.sum(axis=0) if self.spec.shared_residues else self._onehot @ g_amp
        g_s2 = 0.5 * (r * r / s2 - 1.0) / s2
        grads["sigma2_H"] = g_s2.sum() if self.spec.shared_noise else self._onehot @ g_s2
        return ll, grads

    def _prior(self, values):
        spec = self.spec
        total = 0.0
        grads: dict = {}
        for name in ("mu_omega", "sigma2_omega", "alpha_zeta", "beta_zeta",
                     "mu_A", "sigma2_A", "mu_noise", "sigma2_noise"):
            lp, dx = spec.prior(name).logpdf(values[name])
            total += np.sum(lp)
            _acc(grads, name, dx)

        lp, dx, dmu, dvar = truncated_normal_logpdf(
            values["omega_nat"], values["mu_omega"], values["sigma2_omega"])
        total += np.sum(lp)
        _acc(grads, "omega_nat", dx)
        _acc(grads, "mu_omega", dmu.sum(axis=0))
        _acc(grads, "sigma2_omega", dvar.sum(axis=0))

        lp, dx, da, db = beta_logpdf(values["zeta"], values["alpha_zeta"], values["beta_zeta"])
        total += np.sum(lp)
        _acc(grads, "zeta", dx)
        _acc(grads, "alpha_zeta", da.sum(axis=0))
        _acc(grads, "beta_zeta", db.sum(axis=0))

        lp, dx, dmu, dvar = normal_logpdf(values["A"], values["mu_A"], values["sigma2_A"])
        total += np.sum(lp)
        _acc(grads, "A", dx)
        red = (lambda g: g) if spec.shared_residues else (lambda g: g.sum(axis=0))
        _acc(grads, "mu_A", red(dmu))
        _acc(grads, "sigma2_A", red(dvar))

        lp, dx, dmu, dvar = truncated_normal_logpdf(
            values["sigma2_H"], values["mu_noise"], values["sigma2_noise"])
        total += np.sum(lp)
        _acc(grads, "sigma2_H", dx)
        _acc(grads, "mu_noise", np.sum(dmu))
        _acc(grads, "sigma2_noise", np.sum(dvar))
        return total, grads

    def initial_values(self) -> dict:
        spec = self.spec
        K, M = self.n_domains, self.n_modes
        v = {name: spec.prior(name).centre() for name in (
            "mu_omega", "sigma2_omega", "alpha_zeta", "beta_zeta",
            "mu_A", "sigma2_A")}
        v["mu_noise"] = float(spec.mu_noise.centre()[0])
        v["sigma2_noise"] = float(spec.sigma2_noise.centre()[0])
        wn = np.broadcast_to(v["mu_omega"], (K, M)).copy()
        if self.layout["omega_nat"].transform == "ordered":
            wn = np.maximum.accumulate(wn, axis=1)
            wn = wn + 1e-6 * np.arange(M)
        v["omega_nat"] = wn
        v["zeta"] = np.broadcast_to(v["alpha_zeta"] / (v["alpha_zeta"] + v["beta_zeta"]), (K, M))
        v["A"] = v["mu_A"] if spec.shared_residues else np.broadcast_to(v["mu_A"], (K, M))
        s2 = PriorSpec.truncated_normal(v["mu_noise"], v["sigma2_noise"]).centre()[0]
        v["sigma2_H"] = s2 if spec.shared_noise else np.full(K, s2)
        return v


class TemperatureFRFModel(_FrfModelBase):
    """Single structure at K temperatures; modal parameters follow temperature laws."""

    def __init__(self, data: FrfDataset, spec: TemperatureSpec | None = None):
        super().__init__(data)
        self.spec = spec or TemperatureSpec()
        self.temperatures = data.temperatures
        if not np.all(np.isfinite(self.temperatures)):
            raise ModelSpecError("temperatures must be finite")
        self.n_domains = data.n_domains
        self.n_modes = self.spec.n_modes
        shape = () if self.n_modes == 1 else (self.n_modes,)
        lay = ParameterLayout()
        lay.add("mu_omega", shape, "positive", "population")
        lay.add("mu_zeta", shape, "positive", "population")
        lay.add("a1", shape, "real", "population")
        lay.add("a2", shape, "real", "population")
        lay.add("b", shape, "real", "population")
        lay.add("A", shape, "real", "shared")
        lay.add("sigma2_H", (), "positive", "shared")
        if self.spec.sample_residue_hyper:
            lay.add("mu_A", shape, "real", "hyper")
            lay.add("sigma2_A", shape, "positive", "hyper")
        self.layout = lay
        self._T = self.temperatures[self._k]
        priors = [self.spec.prior(name) for name in _TEMP_PRIORS]
        self.use_compiled = self.n_modes == 1 and all(
            p.kind != "truncated_normal" or p.lower == 0.0 for p in priors)
        if self.use_compiled:
            kind, loc, var = _kernels.prior_table(priors, 1)
            self._table = kind, loc[:, 0].copy(), var[:, 0].copy()

    def _compiled(self, u):
        kind, loc, var = self._table
        return _kernels.temperature_logp_grad(
            u, self.spec.sample_residue_hyper, kind, loc, var, self._w, self._y, self._T)

    def compiled_target(self):
        if not self.use_compiled:
            return None
        kind, loc, var = self._table
        return _kernels.temperature_target, (
            self.spec.sample_residue_hyper, kind, loc, var, self._w, self._y, self._T)

    def temperature_parameters(self, values: dict, temperatures):
        """Natural frequency and damping at ``temperatures`` (shape ``(..., n_T, M)``)."""
        T = np.asarray(temperatures, dtype=float)
        def col(x):
            return np.atleast_1d(np.asarray(x))[..., None, :] if self.n_modes > 1 \
                else np.asarray(x)[..., None, None]
        Tc = T[:, None]
        wn = col(values["mu_omega"]) + col(values["a1"]) * Tc + col(values["a2"]) * Tc**2
        zeta = col(values["mu_zeta"]) + col(values["b"]) * Tc
        return wn, zeta

    def domain_parameters(self, values: dict, k: int):
        wn, zeta = self.temperature_parameters(values, [self.temperatures[k]])
        amp = np.asarray(values["A"])
        amp = amp[..., None] if self.n_modes == 1 else amp
        return wn[..., 0, :], zeta[..., 0, :], amp

    def noise_variance(self, values: dict, k: int = 0):
        return values["sigma2_H"]

    def _likelihood(self, values):
        M = self.n_modes
        wn_k, zeta_k = self.temperature_parameters(values, self.temperatures)
        if np.any(wn_k <= 0) or np.any(zeta_k <= 0) or np.any(zeta_k >= 1):
            return -np.inf, {}
        wn = wn_k[self._k]
        zeta = zeta_k[self._k]
        amp = np.broadcast_to(np.reshape(values["A"], (M,)), wn.shape)
        s2 = values["sigma2_H"]
        f, d_wn, d_zeta, d_amp = real_part_and_partials(wn, zeta, amp, self._w)
        ll, r = _gaussian_loglik(self._y, f, s2)
        score = (r / s2)[:, None]
        g_wn = score * d_wn
        g_zeta = score * d_zeta
        T = self._T[:, None]
        shape = () if M == 1 else (M,)
        red = lambda g: np.reshape(g.sum(axis=0), shape)
        grads = {
            "mu_omega": red(g_wn),
            "a1": red(g_wn * T),
            "a2": red(g_wn * T * T),
            "mu_zeta": red(g_zeta),
            "b": red(g_zeta * T),
            "A": red(score * d_amp),
            "sigma2_H": np.sum(0.5 * (r * r / s2 - 1.0) / s2),
        }
        return ll, grads

    def _prior(self, values):
        spec = self.spec
        total = 0.0
        grads: dict = {}
        for name in ("mu_omega", "mu_zeta", "a1", "a2", "b", "sigma2_H"):
            lp, dx = spec.prior(name).logpdf(values[name])
            total += np.sum(lp)
            _acc(grads, name, np.reshape(dx, np.shape(values[name])))
        if spec.sample_residue_hyper:
            for name in ("mu_A", "sigma2_A"):
                lp, dx = spec.prior(name).logpdf(values[name])
                total += np.sum(lp)
                _acc(grads, name, np.reshape(dx, np.shape(values[name])))
            mu_A, s2_A = values["mu_A"], values["sigma2_A"]
        else:
            mu_A, s2_A = spec.mu_A.loc, spec.sigma2_A.loc
            if self.n_modes == 1:
                mu_A, s2_A = mu_A[0], s2_A[0]
        lp, dx, dmu, dvar = normal_logpdf(values["A"], mu_A, s2_A)
        total += np.sum(lp)
        _acc(grads, "A", dx)
        if spec.sample_residue_hyper:
            _acc(grads, "mu_A", dmu)
            _acc(grads, "sigma2_A", dvar)
        return total, grads

    def peak_frequencies(self) -> np.ndarray:
        """Rough resonance per temperature: midpoint of the two real-part lobes."""
        out = np.empty(self.n_domains)
        for k in range(self.n_domains):
            sel = self._k == k
            w, y = self._w[sel], self._y[sel]
            out[k] = 0.5 * (w[np.argmax(y)] + w[np.argmin(y)])
        return out

    @property
    def _law_from_peaks(self) -> bool:
        return self.spec.init_from_peaks and self.n_modes == 1

    def initial_values(self) -> dict:
        spec = self.spec
        squeeze = (lambda x: float(np.asarray(x)[0])) if self.n_modes == 1 else (lambda x: x)
        v = {name: squeeze(spec.prior(name).centre())
             for name in ("mu_omega", "mu_zeta", "a1", "a2", "b")}
        if self._law_from_peaks:
            T = self.temperatures
            deg = min(2, np.unique(T).size - 1)
            coef = np.zeros(3)
            coef[:deg + 1] = np.polynomial.polynomial.polyfit(T, self.peak_frequencies(), deg)
            if coef[0] > 0:
                v["mu_omega"], v["a1"], v["a2"] = (float(c) for c in coef)
        v["sigma2_H"] = float(spec.sigma2_H.centre()[0])
        v["A"] = squeeze(spec.mu_A.centre())
        if spec.sample_residue_hyper:
            v["mu_A"] = squeeze(spec.mu_A.centre())
            v["sigma2_A"] = squeeze(spec.sigma2_A.centre())
        return v

    def initial_point(self, rng, jitter: float = 0.1) -> np.ndarray:
        """Jittered start; frequency-law jitter is shrunk by the damping centre.

        A relative shift larger than the damping ratio moves every resonance
        off its peak, which is where chains get trapped in poor local modes.
        """
        u = super().initial_point(rng, jitter)
        if not (jitter and self._law_from_peaks):
            return u
        values = self.constrain(u)
        centre = self.initial_values()
        tight = jitter * float(np.min(self.spec.mu_zeta.centre()))
        for name in ("mu_omega", "a1", "a2"):
            values[name] = centre[name] * (1.0 + rng.uniform(-tight, tight))
        return self.unconstrain(values)


class NoPoolingModel:
    """K independent single-domain models, exposed as one block-diagonal target.

    Each domain carries its own hyper-level nodes. Samplers should fit the
    ``submodels`` one at a time; the joint density exists for completeness.
    """

    def __init__(self, data: FrfDataset, spec: HierarchySpec | None = None):
        self.data = data
        self.spec = spec or HierarchySpec()
        self.pooling = PoolingMode.NO_POOLING
        self.submodels = [PopulationFRFModel(data.subset([k]), self.spec,
                                             PoolingMode.PARTIAL_POOLING)
                          for k in range(data.n_domains)]
        self.n_domains = data.n_domains
        self.n_modes = self.spec.n_modes
        self._offsets = np.cumsum([0] + [m.dim for m in self.submodels])

    @property
    def dim(self) -> int:
        return int(self._offsets[-1])

    @property
    def names(self) -> list[str]:
        return [f"domain{k + 1}.{n}" for k, m in enumerate(self.submodels) for n in m.names]

    def split(self, u):
        return [u[..., self._offsets[k]:self._offsets[k + 1]] for k in range(self.n_domains)]

    def constrain(self, u) -> list[dict]:
        return [m.constrain(part) for m, part in zip(self.submodels, self.split(u))]

    def constrain_flat(self, u) -> np.ndarray:
        return np.concatenate([m.constrain_flat(part) for m, part in
                               zip(self.submodels, self.split(np.asarray(u, dtype=float)))],
                              axis=-1)

    def log_density_and_gradient(self, u):
        total, grads = 0.0, []
        for m, part in zip(self.submodels, self.split(np.asarray(u, dtype=float))):
            lp, g = m.log_density_and_gradient(part)
            total += lp
            grads.append(g)
        return total, np.concatenate(grads)

    def log_density(self, u) -> float:
        return self.log_density_and_gradient(u)[0]

    def log_likelihood(self, values: list[dict]) -> float:
        return sum(m.log_likelihood(v) for m, v in zip(self.submodels, values))

    def log_prior(self, values: list[dict]) -> float:
        return sum(m.log_prior(v) for m, v in zip(self.submodels, values))

    def initial_point(self, rng, jitter: float = 0.1) -> np.ndarray:
        return np.concatenate([m.initial_point(rng, jitter) for m in self.submodels])


def build_model(data: FrfDataset, spec=None, pooling=PoolingMode.PARTIAL_POOLING):
    """Construct the model object matching ``spec`` and ``pooling``."""
    pooling = PoolingMode.parse(pooling)
    if isinstance(spec, TemperatureSpec):
        if pooling is not PoolingMode.PARTIAL_POOLING:
            raise ModelSpecError("the temperature model is only defined with partial pooling")
        return TemperatureFRFModel(data, spec)
    if spec is not None and not isinstance(spec, HierarchySpec):
        raise ModelSpecError(f"unsupported spec type {type(spec).__name__}")
    if pooling is PoolingMode.NO_POOLING and data.n_domains > 1:
        return NoPoolingModel(data, spec)
    return PopulationFRFModel(data, spec, pooling)
