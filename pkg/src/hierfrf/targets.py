"""Analytic densities for checking the sampler against known moments."""

from __future__ import annotations

import numpy as np
from scipy import special


class GaussianTarget:
    """Multivariate normal with dense covariance."""

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self.precision = np.linalg.inv(self.cov)
        self.dim = self.mean.size
        self.names = [f"x[{i + 1}]" for i in range(self.dim)]

    @classmethod
    def correlated_2d(cls, rho=0.9):
        return cls(np.zeros(2), [[1.0, rho], [rho, 1.0]])

    def log_density_and_gradient(self, u):
        d = np.asarray(u, dtype=float) - self.mean
        g = -self.precision @ d
        return 0.5 * float(d @ g), g

    def initial_point(self, rng, jitter=None):
        return rng.uniform(-2.0, 2.0, self.dim)

    @property
    def variance(self):
        return np.diag(self.cov)


class StudentTTarget:
    """Independent Student-t coordinates with ``df`` degrees of freedom."""

    def __init__(self, df=5.0, dim=1):
        self.df = float(df)
        self.dim = int(dim)
        self.names = [f"x[{i + 1}]" for i in range(self.dim)]
        self.mean = np.zeros(self.dim)
        self.variance = np.full(self.dim, self.df / (self.df - 2.0)) if self.df > 2 else None

    def log_density_and_gradient(self, u):
        u = np.asarray(u, dtype=float)
        nu = self.df
        lp = -0.5 * (nu + 1.0) * np.log1p(u * u / nu)
        const = special.gammaln(0.5 * (nu + 1)) - special.gammaln(0.5 * nu) - 0.5 * np.log(nu * np.pi)
        g = -(nu + 1.0) * u / (nu + u * u)
        return float(np.sum(lp) + self.dim * const), g

    def initial_point(self, rng, jitter=None):
        return rng.uniform(-2.0, 2.0, self.dim)


class ConjugateHierarchicalGaussian(GaussianTarget):
    """Group means ``theta_j ~ N(mu, tau^2)`` observed as ``y_j ~ N(theta_j, s_j^2)``
    with ``mu ~ N(m0, v0)`` and known ``tau``.

    The posterior over ``(mu, theta_1..theta_J)`` is jointly Gaussian; its
    precision is assembled directly from the three quadratic terms.
    """

    def __init__(self, y=(2.0, -1.0, 0.5, 3.0), s=(1.0, 1.5, 0.8, 2.0), tau=1.0,
                 m0=0.0, v0=4.0):
        y = np.asarray(y, dtype=float)
        s2 = np.square(np.asarray(s, dtype=float))
        J = y.size
        t2 = float(tau) ** 2
        prec = np.zeros((J + 1, J + 1))
        lin = np.zeros(J + 1)
        prec[0, 0] = 1.0 / v0 + J / t2
        lin[0] = m0 / v0
        for j in range(J):
            prec[0, j + 1] = prec[j + 1, 0] = -1.0 / t2
            prec[j + 1, j + 1] = 1.0 / t2 + 1.0 / s2[j]
            lin[j + 1] = y[j] / s2[j]
        cov = np.linalg.inv(prec)
        super().__init__(cov @ lin, cov)
        self.names = ["mu"] + [f"theta[{j + 1}]" for j in range(J)]
