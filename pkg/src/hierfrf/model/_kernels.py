"""Compiled log-density kernels for the two FRF model families.

These mirror the vectorised numpy implementation in ``frf_models`` term by
term; the test-suite checks the two against each other. The unconstrained
vector layout is fixed by the model classes and documented next to each
kernel.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)
_SQRT1_2 = math.sqrt(0.5)


@njit(cache=True)
def log_ndtr(z):
    if z > -30.0:
        return math.log(0.5 * math.erfc(-z * _SQRT1_2))
    # asymptotic expansion of the normal lower tail
    z2 = z * z
    series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)
    return -0.5 * z2 - math.log(-z) - 0.5 * LOG_2PI + math.log(series)


@njit(cache=True)
def digamma(x):
    acc = 0.0
    while x < 6.0:
        acc -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    return acc + math.log(x) - 0.5 * inv - inv2 * (
        1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (
            1.0 / 240.0 - inv2 / 132.0))))


@njit(cache=True)
def _normal(x, loc, var):
    diff = x - loc
    inv = 1.0 / var
    lp = -0.5 * (LOG_2PI + math.log(var) + diff * diff * inv)
    dx = -diff * inv
    dvar = 0.5 * inv * (diff * diff * inv - 1.0)
    return lp, dx, -dx, dvar


@njit(cache=True)
def _trunc_normal(x, loc, var):
    """Normal truncated below at zero."""
    if x < 0.0:
        return -np.inf, 0.0, 0.0, 0.0
    lp, dx, dloc, dvar = _normal(x, loc, var)
    sd = math.sqrt(var)
    z = loc / sd
    lcdf = log_ndtr(z)
    mills = math.exp(-0.5 * (LOG_2PI + z * z) - lcdf)
    return lp - lcdf, dx, dloc - mills / sd, dvar + mills * z / (2.0 * var)


@njit(cache=True)
def _beta(x, a, b):
    lx = math.log(x)
    l1x = math.log1p(-x)
    lp = (a - 1.0) * lx + (b - 1.0) * l1x - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    dx = (a - 1.0) / x - (b - 1.0) / (1.0 - x)
    pab = digamma(a + b)
    return lp, dx, lx - digamma(a) + pab, l1x - digamma(b) + pab


@njit(cache=True)
def _fixed_prior(kind, x, loc, var):
    # kind: 0 normal, 1 truncated normal (lower 0), 2 beta (loc=alpha, var=beta)
    if kind == 0:
        lp, dx, _, _ = _normal(x, loc, var)
    elif kind == 1:
        lp, dx, _, _ = _trunc_normal(x, loc, var)
    else:
        lp, dx, _, _ = _beta(x, loc, var)
    return lp, dx


@njit(cache=True)
def _modal_point(w, wn, zeta, amp):
    """Real accelerance term of one mode and its partials."""
    w2 = w * w
    a = wn * wn - w2
    b = 2.0 * zeta * w * wn
    inv = 1.0 / (a * a + b * b)
    d_amp = -w2 * a * inv
    inv2 = inv * inv
    d_wn = -w2 * amp * (2.0 * wn * inv - a * (4.0 * a * wn + 4.0 * b * zeta * w) * inv2)
    d_zeta = 4.0 * w2 * amp * a * b * w * wn * inv2
    return amp * d_amp, d_wn, d_zeta, d_amp


@njit(cache=True)
def population_logp_grad(u, K, M, ordered, prior_kind, prior_loc, prior_var, w, y, dom):
    """Partial-pooling model with shared residues and shared noise variance.

    Layout (offsets in units of M): mu_omega 0, sigma2_omega 1, alpha_zeta 2,
    beta_zeta 3, mu_A 4, sigma2_A 5; then mu_noise, sigma2_noise, omega_nat
    (K*M, row-major), zeta (K*M), A (M), sigma2_H.
    ``prior_*`` rows 0..5 are the per-mode hyper-priors, rows 6 and 7 hold the
    noise hyper-priors in column 0.
    """
    n = u.shape[0]
    g = np.zeros(n)
    x = np.empty(n)
    lp = 0.0
    o_mn = 6 * M
    o_wn = o_mn + 2
    o_z = o_wn + K * M
    o_A = o_z + K * M
    o_s2 = o_A + M

    # transforms
    for i in range(6 * M):
        blk = i // M
        if blk == 4:
            x[i] = u[i]
        else:
            x[i] = math.exp(u[i])
            lp += u[i]
    for i in range(o_mn, o_wn):
        x[i] = math.exp(u[i])
        lp += u[i]
    for k in range(K):
        run = 0.0
        for m in range(M):
            j = o_wn + k * M + m
            e = math.exp(u[j])
            lp += u[j]
            if ordered:
                run += e
                x[j] = run
            else:
                x[j] = e
    for j in range(o_z, o_A):
        s = 1.0 / (1.0 + math.exp(-u[j]))
        x[j] = s
        lp += math.log(s) + math.log1p(-s)
    for j in range(o_A, o_s2):
        x[j] = u[j]
    x[o_s2] = math.exp(u[o_s2])
    lp += u[o_s2]

    gx = np.zeros(n)
    # fixed hyper-priors
    for i in range(6 * M):
        blk = i // M
        m = i % M
        l, d = _fixed_prior(prior_kind[blk], x[i], prior_loc[blk, m], prior_var[blk, m])
        lp += l
        gx[i] += d
    for r in range(2):
        l, d = _fixed_prior(prior_kind[6 + r], x[o_mn + r], prior_loc[6 + r, 0], prior_var[6 + r, 0])
        lp += l
        gx[o_mn + r] += d

    # domain-level nodes
    for k in range(K):
        for m in range(M):
            j = o_wn + k * M + m
            l, dx, dmu, dvar = _trunc_normal(x[j], x[m], x[M + m])
            lp += l
            gx[j] += dx
            gx[m] += dmu
            gx[M + m] += dvar
            j = o_z + k * M + m
            l, dx, da, db = _beta(x[j], x[2 * M + m], x[3 * M + m])
            lp += l
            gx[j] += dx
            gx[2 * M + m] += da
            gx[3 * M + m] += db
    for m in range(M):
        l, dx, dmu, dvar = _normal(x[o_A + m], x[4 * M + m], x[5 * M + m])
        lp += l
        gx[o_A + m] += dx
        gx[4 * M + m] += dmu
        gx[5 * M + m] += dvar
    l, dx, dmu, dvar = _trunc_normal(x[o_s2], x[o_mn], x[o_mn + 1])
    lp += l
    gx[o_s2] += dx
    gx[o_mn] += dmu
    gx[o_mn + 1] += dvar
    if not np.isfinite(lp):
        return -np.inf, g

    # likelihood
    s2 = x[o_s2]
    ss = 0.0
    g_s2 = 0.0
    npts = w.shape[0]
    for i in range(npts):
        k = dom[i]
        f = 0.0
        for m in range(M):
            term, _, _, _ = _modal_point(w[i], x[o_wn + k * M + m], x[o_z + k * M + m], x[o_A + m])
            f += term
        r = y[i] - f
        ss += r * r
        score = r / s2
        for m in range(M):
            _, d_wn, d_z, d_a = _modal_point(w[i], x[o_wn + k * M + m], x[o_z + k * M + m], x[o_A + m])
            gx[o_wn + k * M + m] += score * d_wn
            gx[o_z + k * M + m] += score * d_z
            gx[o_A + m] += score * d_a
    lp += -0.5 * (npts * (LOG_2PI + math.log(s2)) + ss / s2)
    gx[o_s2] += 0.5 * (ss / s2 - npts) / s2

    # pull back to unconstrained coordinates (log|J| terms already in lp)
    for i in range(6 * M):
        if i // M == 4:
            g[i] = gx[i]
        else:
            g[i] = gx[i] * x[i] + 1.0
    for i in range(o_mn, o_wn):
        g[i] = gx[i] * x[i] + 1.0
    for k in range(K):
        if ordered:
            tail = 0.0
            for m in range(M - 1, -1, -1):
                j = o_wn + k * M + m
                tail += gx[j]
                g[j] = math.exp(u[j]) * tail + 1.0
        else:
            for m in range(M):
                j = o_wn + k * M + m
                g[j] = gx[j] * x[j] + 1.0
    for j in range(o_z, o_A):
        g[j] = gx[j] * x[j] * (1.0 - x[j]) + 1.0 - 2.0 * x[j]
    for j in range(o_A, o_s2):
        g[j] = gx[j]
    g[o_s2] = gx[o_s2] * x[o_s2] + 1.0
    for i in range(n):
        if not np.isfinite(g[i]):
            return -np.inf, np.zeros(n)
    return lp, g


@njit(cache=True)
def temperature_logp_grad(u, sample_hyper, prior_kind, prior_loc, prior_var, w, y, temp_pts):
    """Single-mode temperature model.

    Layout: mu_omega, mu_zeta, a1, a2, b, A, sigma2_H[, mu_A, sigma2_A].
    Prior rows: mu_omega, mu_zeta, a1, a2, b, sigma2_H, mu_A, sigma2_A.
    """
    n = u.shape[0]
    g = np.zeros(n)
    mu_w = math.exp(u[0])
    mu_z = math.exp(u[1])
    a1 = u[2]
    a2 = u[3]
    b = u[4]
    amp = u[5]
    s2 = math.exp(u[6])
    lp = u[0] + u[1] + u[6]
    gx = np.zeros(n)
    xs = (mu_w, mu_z, a1, a2, b, s2)
    idx = (0, 1, 2, 3, 4, 6)
    for r in range(6):
        l, d = _fixed_prior(prior_kind[r], xs[r], prior_loc[r], prior_var[r])
        lp += l
        gx[idx[r]] += d
    if sample_hyper:
        mu_A = u[7]
        s2_A = math.exp(u[8])
        lp += u[8]
        l, d = _fixed_prior(prior_kind[6], mu_A, prior_loc[6], prior_var[6])
        lp += l
        gx[7] += d
        l, d = _fixed_prior(prior_kind[7], s2_A, prior_loc[7], prior_var[7])
        lp += l
        gx[8] += d
    else:
        mu_A = prior_loc[6]
        s2_A = prior_loc[7]
    l, dx, dmu, dvar = _normal(amp, mu_A, s2_A)
    lp += l
    gx[5] += dx
    if sample_hyper:
        gx[7] += dmu
        gx[8] += dvar
    if not np.isfinite(lp):
        return -np.inf, g

    ss = 0.0
    npts = w.shape[0]
    for i in range(npts):
        T = temp_pts[i]
        wn = mu_w + a1 * T + a2 * T * T
        zeta = mu_z + b * T
        if wn <= 0.0 or zeta <= 0.0 or zeta >= 1.0:
            return -np.inf, g
        f, d_wn, d_z, d_a = _modal_point(w[i], wn, zeta, amp)
        r = y[i] - f
        ss += r * r
        score = r / s2
        gx[0] += score * d_wn
        gx[2] += score * d_wn * T
        gx[3] += score * d_wn * T * T
        gx[1] += score * d_z
        gx[4] += score * d_z * T
        gx[5] += score * d_a
    lp += -0.5 * (npts * (LOG_2PI + math.log(s2)) + ss / s2)
    gx[6] += 0.5 * (ss / s2 - npts) / s2

    g[0] = gx[0] * mu_w + 1.0
    g[1] = gx[1] * mu_z + 1.0
    g[2] = gx[2]
    g[3] = gx[3]
    g[4] = gx[4]
    g[5] = gx[5]
    g[6] = gx[6] * s2 + 1.0
    if sample_hyper:
        g[7] = gx[7]
        g[8] = gx[8] * s2_A + 1.0
    for i in range(n):
        if not np.isfinite(g[i]):
            return -np.inf, np.zeros(n)
    return lp, g


def prior_table(priors, width):
    """Pack fixed priors into ``(kind, loc, var)`` arrays for the kernels."""
    codes = {"normal": 0, "truncated_normal": 1, "beta": 2}
    kind = np.array([codes[p.kind] for p in priors], dtype=np.int64)
    loc = np.zeros((len(priors), width))
    var = np.ones((len(priors), width))
    for r, p in enumerate(priors):
        if p.kind == "truncated_normal" and p.lower != 0.0:
            raise ValueError("compiled kernels assume truncation at zero")
        loc[r] = np.broadcast_to(p.loc, (width,))
        var[r] = np.broadcast_to(p.scale, (width,))
    return kind, loc, var


# Uniform entry points for the compiled sampler: ``fn(u, data)`` with the
# model constants packed into one tuple.

@njit(cache=True)
def population_target(u, data):
    return population_logp_grad(u, data[0], data[1], data[2], data[3], data[4], data[5],
                                data[6], data[7], data[8])


@njit(cache=True)
def temperature_target(u, data):
    return temperature_logp_grad(u, data[0], data[1], data[2], data[3], data[4], data[5],
                                 data[6])
