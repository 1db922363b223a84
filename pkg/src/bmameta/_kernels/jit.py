"""Numba-compiled likelihood kernels.

Loop-style twins of ``reference.py``; the normal CDF comes from
``math.erfc`` so nothing outside numpy/libm is needed inside the jitted
code.  Importing this module requires numba.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_TINY = 1e-300


@njit(cache=True)
def _ncdf(x):
    return 0.5 * math.erfc(-x * _INV_SQRT2)


@njit(cache=True)
def normal_loglik(y, se2, m, tau2):
    out = 0.0
    for i in range(y.shape[0]):
        var = se2[i] + tau2
        r = y[i] - m[i]
        out += -_LOG_SQRT_2PI - 0.5 * math.log(var) - 0.5 * r * r / var
    return out


@njit(cache=True)
def clustered_loglik(y, se2, m, tau2, rho, starts, lens):
    s2b = tau2 * rho
    out = 0.0
    for c in range(starts.shape[0]):
        lo = starts[c]
        hi = lo + lens[c]
        dsum = 0.0
        rsum = 0.0
        quad = 0.0
        logdet = 0.0
        for i in range(lo, hi):
            d = se2[i] + tau2 * (1.0 - rho)
            r = y[i] - m[i]
            inv = 1.0 / d
            dsum += inv
            rsum += r * inv
            quad += r * r * inv
            logdet += math.log(d)
        denom = 1.0 + s2b * dsum
        quad -= s2b * rsum * rsum / denom
        logdet += math.log(denom)
        out += -lens[c] * _LOG_SQRT_2PI - 0.5 * (logdet + quad)
    return out


@njit(cache=True)
def normal_loglik_mu_marginal(y, se2, m_off, tau2, mu0, s0):
    a = 0.0
    b = 0.0
    c = 0.0
    logdet = 0.0
    n = y.shape[0]
    for i in range(n):
        d = se2[i] + tau2
        r = y[i] - m_off[i] - mu0
        inv = 1.0 / d
        a += inv
        b += r * inv
        c += r * r * inv
        logdet += math.log(d)
    denom = 1.0 + s0 * s0 * a
    quad = c - s0 * s0 * b * b / denom
    logdet += math.log(denom)
    return -n * _LOG_SQRT_2PI - 0.5 * (logdet + quad)


@njit(cache=True)
def clustered_loglik_mu_marginal(y, se2, m_off, tau2, rho, mu0, s0, starts, lens):
    s2b = tau2 * rho
    a = 0.0
    b = 0.0
    c = 0.0
    logdet = 0.0
    n = y.shape[0]
    for k in range(starts.shape[0]):
        lo = starts[k]
        hi = lo + lens[k]
        isum = 0.0
        ir = 0.0
        irr = 0.0
        for i in range(lo, hi):
            d = se2[i] + tau2 * (1.0 - rho)
            r = y[i] - m_off[i] - mu0
            inv = 1.0 / d
            isum += inv
            ir += r * inv
            irr += r * r * inv
            logdet += math.log(d)
        denom = 1.0 + s2b * isum
        cb = s2b / denom
        a += isum - cb * isum * isum
        b += ir - cb * isum * ir
        c += irr - cb * ir * ir
        logdet += math.log(denom)
    denom0 = 1.0 + s0 * s0 * a
    quad = c - s0 * s0 * b * b / denom0
    logdet += math.log(denom0)
    return -n * _LOG_SQRT_2PI - 0.5 * (logdet + quad)


@njit(cache=True)
def _study_sel_ll(yi, mi, si, omega, thr_i, obs_bin_i, two_sided):
    ncut = thr_i.shape[0]
    a = 0.0
    if two_sided:
        prev_u = _ncdf((thr_i[0] - mi) / si)
        prev_l = _ncdf((-thr_i[0] - mi) / si)
        a += omega[0] * max(1.0 - prev_u + prev_l, 0.0)
        for j in range(1, ncut):
            u = _ncdf((thr_i[j] - mi) / si)
            l = _ncdf((-thr_i[j] - mi) / si)
            a += omega[j] * max((prev_u - u) + (l - prev_l), 0.0)
            prev_u = u
            prev_l = l
        a += omega[ncut] * max(prev_u - prev_l, 0.0)
    else:
        prev_u = _ncdf((thr_i[0] - mi) / si)
        a += omega[0] * (1.0 - prev_u)
        for j in range(1, ncut):
            u = _ncdf((thr_i[j] - mi) / si)
            a += omega[j] * max(prev_u - u, 0.0)
            prev_u = u
        a += omega[ncut] * prev_u
    if a < _TINY:
        a = _TINY
    w = omega[obs_bin_i]
    if w < _TINY:
        w = _TINY
    r = (yi - mi) / si
    return math.log(w) - _LOG_SQRT_2PI - math.log(si) - 0.5 * r * r - math.log(a)


@njit(cache=True)
def selection_loglik(y, se2, m, tau2, omega, thr, obs_bin, two_sided):
    out = 0.0
    for i in range(y.shape[0]):
        si = math.sqrt(se2[i] + tau2)
        out += _study_sel_ll(y[i], m[i], si, omega, thr[i], obs_bin[i], two_sided)
    return out


@njit(cache=True)
def selection_clustered_loglik(
    y, se2, m, tau2, rho, omega, thr, obs_bin, two_sided, starts, lens, gh_x, gh_w
):
    s2b = tau2 * rho
    s2w = tau2 * (1.0 - rho)
    sb = math.sqrt(s2b)
    log_pi_half = 0.5 * math.log(math.pi)
    out = 0.0
    nh = gh_x.shape[0]
    node_ll = np.empty(nh)
    for c in range(starts.shape[0]):
        lo = starts[c]
        hi = lo + lens[c]
        if lens[c] == 1:
            si = math.sqrt(se2[lo] + tau2)
            out += _study_sel_ll(y[lo], m[lo], si, omega, thr[lo], obs_bin[lo], two_sided)
            continue
        for h in range(nh):
            u = math.sqrt(2.0) * sb * gh_x[h]
            ll = 0.0
            for i in range(lo, hi):
                sw = math.sqrt(se2[i] + s2w)
                ll += _study_sel_ll(y[i], m[i] + u, sw, omega, thr[i], obs_bin[i], two_sided)
            node_ll[h] = ll + math.log(gh_w[h]) - log_pi_half
        top = node_ll[0]
        for h in range(1, nh):
            if node_ll[h] > top:
                top = node_ll[h]
        acc = 0.0
        for h in range(nh):
            acc += math.exp(node_ll[h] - top)
        out += top + math.log(acc)
    return out
