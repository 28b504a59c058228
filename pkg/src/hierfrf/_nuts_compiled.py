"""Compiled multinomial NUTS transition.

Follows the pure-Python transition in ``sampler`` step for step, including
the order in which uniforms are consumed, so both produce the same chain for
the same seeds (up to floating-point summation order in dot products).
Targets are passed as ``fn(u, data) -> (logp, grad)`` compiled functions.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# workspace slots per tree level
_RHO, _PB, _PE, _SB, _SE, _PQ, _PG, _PP, _PIE, _SIE = range(10)
_N_SLOTS = 10


@njit(cache=True)
def _uniform(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    z = z ^ (z >> _S31)
    return float(z >> _S11) * _INV53


@njit(cache=True)
def _logaddexp(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    m = max(a, b)
    return m + math.log(math.exp(a - m) + math.exp(b - m))


@njit(cache=True)
def _dot(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


@njit(cache=True)
def _kinetic(p, inv_mass):
    s = 0.0
    for i in range(p.shape[0]):
        s += p[i] * inv_mass[i] * p[i]
    return 0.5 * s


@njit
def _leapfrog(q, p, g, lp, eps, inv_mass, fn, data):
    n = q.shape[0]
    for i in range(n):
        p[i] = p[i] + 0.5 * eps * g[i]
        q[i] = q[i] + eps * inv_mass[i] * p[i]
    val, grad = fn(q, data)
    if math.isfinite(val):
        lp[0] = val
        for i in range(n):
            g[i] = grad[i]
    else:
        lp[0] = -np.inf
        for i in range(n):
            g[i] = 0.0
    for i in range(n):
        p[i] = p[i] + 0.5 * eps * g[i]


@njit(cache=True)
def _no_u_turn_sum(ps_minus, ps_plus, a, b):
    """Criterion on ``rho = a + b`` without allocating it."""
    s1 = 0.0
    s2 = 0.0
    for i in range(a.shape[0]):
        r = a[i] + b[i]
        s1 += ps_plus[i] * r
        s2 += ps_minus[i] * r
    return s1 > 0.0 and s2 > 0.0


@njit
def _build(level, q, p, g, lp, eps, inv_mass, h0, threshold, ws, wlp, acc, rng, fn, data):
    if level == 0:
        _leapfrog(q, p, g, lp, eps, inv_mass, fn, data)
        acc[0] += 1.0
        h = -lp[0] + _kinetic(p, inv_mass)
        if math.isnan(h):
            h = np.inf
        if h - h0 > threshold:
            acc[2] = 1.0
        dh = h0 - h
        if dh > 0:
            acc[1] += 1.0
        else:
            acc[1] += math.exp(dh)
        for i in range(q.shape[0]):
            ws[0, _PQ, i] = q[i]
            ws[0, _PG, i] = g[i]
            ws[0, _PP, i] = p[i]
            ws[0, _RHO, i] = p[i]
            ws[0, _PB, i] = p[i]
            ws[0, _PE, i] = p[i]
            ws[0, _SB, i] = inv_mass[i] * p[i]
            ws[0, _SE, i] = inv_mass[i] * p[i]
        wlp[0] = lp[0]
        return acc[2] == 0.0, dh

    ok, lw_init = _build(level - 1, q, p, g, lp, eps, inv_mass, h0, threshold, ws, wlp, acc,
                         rng, fn, data)
    if not ok:
        return False, lw_init
    below = level - 1
    for i in range(q.shape[0]):
        ws[level, _RHO, i] = ws[below, _RHO, i]
        ws[level, _PB, i] = ws[below, _PB, i]
        ws[level, _SB, i] = ws[below, _SB, i]
        ws[level, _PIE, i] = ws[below, _PE, i]
        ws[level, _SIE, i] = ws[below, _SE, i]
        ws[level, _PQ, i] = ws[below, _PQ, i]
        ws[level, _PG, i] = ws[below, _PG, i]
        ws[level, _PP, i] = ws[below, _PP, i]
    wlp[level] = wlp[below]

    ok, lw_final = _build(below, q, p, g, lp, eps, inv_mass, h0, threshold, ws, wlp, acc,
                          rng, fn, data)
    if not ok:
        return False, lw_final
    lw = _logaddexp(lw_init, lw_final)
    if not _uniform(rng) > math.exp(lw_final - lw):
        for i in range(q.shape[0]):
            ws[level, _PQ, i] = ws[below, _PQ, i]
            ws[level, _PG, i] = ws[below, _PG, i]
            ws[level, _PP, i] = ws[below, _PP, i]
        wlp[level] = wlp[below]
    for i in range(q.shape[0]):
        ws[level, _PE, i] = ws[below, _PE, i]
        ws[level, _SE, i] = ws[below, _SE, i]
    rho_init = ws[level, _RHO]
    rho_final = ws[below, _RHO]
    persist = (_no_u_turn_sum(ws[level, _SB], ws[level, _SE], rho_init, rho_final)
               and _no_u_turn_sum(ws[level, _SB], ws[below, _SB], rho_init, ws[below, _PB])
               and _no_u_turn_sum(ws[level, _SIE], ws[level, _SE], rho_final, ws[level, _PIE]))
    for i in range(q.shape[0]):
        rho_init[i] += rho_final[i]
    return persist, lw


@njit
def nuts_transition(q0, lp0, g0, p0, eps, inv_mass, max_depth, threshold, seed, fn, data):
    """One transition; returns ``(q, grad, lp, accept_stat, depth, n_leapfrog,
    divergent, energy)``."""
    n = q0.shape[0]
    rng = np.empty(1, dtype=np.uint64)
    rng[0] = seed
    budget = max(max_depth, 1)
    ws = np.empty((budget + 1, _N_SLOTS, n))
    wlp = np.empty(budget + 1)
    acc = np.zeros(3)

    fq, fp, fg = q0.copy(), p0.copy(), g0.copy()
    bq, bp, bg = q0.copy(), p0.copy(), g0.copy()
    flp = np.array([lp0])
    blp = np.array([lp0])
    sq, sg, sp = q0.copy(), g0.copy(), p0.copy()
    slp = lp0
    h0 = -lp0 + _kinetic(p0, inv_mass)

    ps0 = inv_mass * p0
    p_ff, p_fb, p_bf, p_bb = p0.copy(), p0.copy(), p0.copy(), p0.copy()
    s_ff, s_fb, s_bf, s_bb = ps0.copy(), ps0.copy(), ps0.copy(), ps0.copy()
    rho = p0.copy()
    rho_f = np.zeros(n)
    rho_b = np.zeros(n)
    lw = 0.0
    depth = 0
    while depth < budget:
        if _uniform(rng) > 0.5:
            rho_b[:] = rho
            p_bf[:] = p_fb
            s_bf[:] = s_fb
            ok, lw_sub = _build(depth, fq, fp, fg, flp, eps, inv_mass, h0, threshold, ws, wlp,
                                acc, rng, fn, data)
            rho_f[:] = ws[depth, _RHO]
            p_fb[:] = ws[depth, _PB]
            p_ff[:] = ws[depth, _PE]
            s_fb[:] = ws[depth, _SB]
            s_ff[:] = ws[depth, _SE]
        else:
            rho_f[:] = rho
            p_fb[:] = p_bf
            s_fb[:] = s_bf
            ok, lw_sub = _build(depth, bq, bp, bg, blp, -eps, inv_mass, h0, threshold, ws, wlp,
                                acc, rng, fn, data)
            rho_b[:] = ws[depth, _RHO]
            p_bf[:] = ws[depth, _PB]
            p_bb[:] = ws[depth, _PE]
            s_bf[:] = ws[depth, _SB]
            s_bb[:] = ws[depth, _SE]
        if not ok:
            break
        depth += 1
        take = lw_sub > lw
        if not take:
            take = _uniform(rng) < math.exp(lw_sub - lw)
        if take:
            sq[:] = ws[depth - 1, _PQ]
            sg[:] = ws[depth - 1, _PG]
            sp[:] = ws[depth - 1, _PP]
            slp = wlp[depth - 1]
        lw = _logaddexp(lw, lw_sub)
        for i in range(n):
            rho[i] = rho_b[i] + rho_f[i]
        persist = (_no_u_turn_sum(s_bb, s_ff, rho_b, rho_f)
                   and _no_u_turn_sum(s_bb, s_fb, rho_b, p_fb)
                   and _no_u_turn_sum(s_bf, s_ff, rho_f, p_bf))
        if not persist:
            break

    n_leap = acc[0]
    accept = acc[1] / max(n_leap, 1.0)
    energy = -slp + _kinetic(sp, inv_mass)
    return sq, sg, slp, accept, depth, int(n_leap), acc[2] != 0.0, energy
