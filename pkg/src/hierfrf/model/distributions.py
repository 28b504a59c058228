"""Log-densities with partial derivatives, vectorised over numpy arrays.

Every ``*_logpdf`` returns ``(logp, d_x, d_loc, d_var)`` (or the beta
analogue) with the same broadcast shape, so the hierarchical models can chain
gradients through hyper-parameters without a generic autodiff layer. Normal
distributions are parameterised by variance, matching the priors they encode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

LOG_2PI = np.log(2.0 * np.pi)


def normal_logpdf(x, loc, var):
    diff = x - loc
    inv = 1.0 / var
    logp = -0.5 * (LOG_2PI + np.log(var) + diff * diff * inv)
    d_x = -diff * inv
    d_var = 0.5 * inv * (diff * diff * inv - 1.0)
    return logp, d_x, -d_x, d_var


def _log_mills(z):
    # log(phi(z) / Phi(z)); log_ndtr carries the asymptotic branch for z << 0
    return -0.5 * (LOG_2PI + z * z) - special.log_ndtr(z)


def truncated_normal_logpdf(x, loc, var, lower=0.0):
    """Normal truncated to ``[lower, inf)``.

    The log-normaliser is ``log(1 - Phi((lower - loc) / sd)) =
    log Phi((loc - lower) / sd)``.
    """
    logp, d_x, d_loc, d_var = normal_logpdf(x, loc, var)
    sd = np.sqrt(var)
    z = (loc - lower) / sd
    logp = logp - special.log_ndtr(z)
    mills = np.exp(_log_mills(z))
    d_loc = d_loc - mills / sd
    # dz/dvar = -z / (2 var)
    d_var = d_var + mills * z / (2.0 * var)
    logp = np.where(x < lower, -np.inf, logp)
    return logp, d_x, d_loc, d_var


def beta_logpdf(x, alpha, beta):
    """Beta density; returns ``(logp, d_x, d_alpha, d_beta)``."""
    log_x = np.log(x)
    log_1mx = np.log1p(-x)
    logp = (alpha - 1.0) * log_x + (beta - 1.0) * log_1mx - special.betaln(alpha, beta)
    d_x = (alpha - 1.0) / x - (beta - 1.0) / (1.0 - x)
    psi_ab = special.digamma(alpha + beta)
    d_alpha = log_x - special.digamma(alpha) + psi_ab
    d_beta = log_1mx - special.digamma(beta) + psi_ab
    return logp, d_x, d_alpha, d_beta


@dataclass(frozen=True)
class PriorSpec:
    """A fixed prior: ``normal``/``truncated_normal`` use ``(loc, var)``;
    ``beta`` uses ``(alpha, beta)`` stored in the same two slots."""

    kind: str
    loc: np.ndarray
    scale: np.ndarray  # variance for normals, beta shape for beta
    lower: float = 0.0
    upper: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("normal", "truncated_normal", "beta"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        loc = np.atleast_1d(np.asarray(self.loc, dtype=float))
        scale = np.atleast_1d(np.asarray(self.scale, dtype=float))
        if np.any(scale <= 0):
            raise ValueError("prior scales / shapes must be positive")
        if self.kind == "beta" and np.any(loc <= 0):
            raise ValueError("beta shapes must be positive")
        if self.upper is not None:
            if self.upper <= self.lower:
                raise ValueError("truncation bounds must be ordered")
            raise NotImplementedError("only lower-bounded truncation is supported")
        object.__setattr__(self, "loc", loc)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def normal(cls, loc, var):
        return cls("normal", loc, var)

    @classmethod
    def truncated_normal(cls, loc, var, lower=0.0):
        return cls("truncated_normal", loc, var, lower)

    @classmethod
    def beta_dist(cls, alpha, beta):
        return cls("beta", alpha, beta)

    @property
    def support_lower(self):
        if self.kind == "truncated_normal":
            return self.lower
        if self.kind == "beta":
            return 0.0
        return -np.inf

    def centre(self) -> np.ndarray:
        """Location used to start samplers: ``loc`` when it lies inside the
        support, otherwise the mean."""
        if self.kind == "truncated_normal":
            return np.where(self.loc > self.lower, self.loc, self.mean())
        return self.mean()

    def mean(self) -> np.ndarray:
        if self.kind == "normal":
            return self.loc
        if self.kind == "beta":
            return self.loc / (self.loc + self.scale)
        sd = np.sqrt(self.scale)
        z = (self.loc - self.lower) / sd
        return self.loc + sd * np.exp(_log_mills(z))

    def logpdf(self, x):
        """Returns ``(logp, d_x)`` elementwise."""
        if self.kind == "normal":
            lp, dx, _, _ = normal_logpdf(x, self.loc, self.scale)
        elif self.kind == "truncated_normal":
            lp, dx, _, _ = truncated_normal_logpdf(x, self.loc, self.scale, self.lower)
        else:
            lp, dx, _, _ = beta_logpdf(x, self.loc, self.scale)
        return lp, dx

    def to_dict(self) -> dict:
        if self.kind == "beta":
            return {"kind": "beta", "alpha": self.loc.tolist(), "beta": self.scale.tolist()}
        return {"kind": self.kind, "loc": self.loc.tolist(), "var": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        kind = d["kind"]
        if kind == "beta":
            return cls.beta_dist(d["alpha"], d["beta"])
        var = d["var"] if "var" in d else np.square(d["sd"])
        if kind == "normal":
            return cls.normal(d["loc"], var)
        return cls.truncated_normal(d["loc"], var, d.get("lower", 0.0))
