"""Vectorized numpy implementations of the likelihood kernels.

These are the fallback (and the cross-check) for the numba kernels in
``jit.py``; both backends must agree to floating-point noise.  All kernels
take plain float64 arrays and return a scalar log-likelihood.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
_TINY = 1e-300


def normal_loglik(y, se2, m, tau2):
    """Independent heteroscedastic normal: y_i ~ N(m_i, se2_i + tau2)."""
    var = se2 + tau2
    return float(np.sum(-_LOG_SQRT_2PI - 0.5 * np.log(var) - 0.5 * (y - m) ** 2 / var))


def clustered_loglik(y, se2, m, tau2, rho, starts, lens):
    """Cluster-correlated normal likelihood.

    Within a cluster the covariance is ``diag(se2 + tau2*(1-rho)) +
    tau2*rho * J``; records must be ordered so cluster ``c`` occupies
    ``starts[c]:starts[c]+lens[c]``.  Evaluated per block via the rank-one
    Woodbury identity.
    """
    s2b = tau2 * rho
    out = 0.0
    r = y - m
    d = se2 + tau2 * (1.0 - rho)
    for c in range(len(starts)):
        sl = slice(starts[c], starts[c] + lens[c])
        dc = d[sl]
        rc = r[sl]
        inv = 1.0 / dc
        denom = 1.0 + s2b * inv.sum()
        quad = (rc * rc * inv).sum() - s2b * (rc * inv).sum() ** 2 / denom
        logdet = np.log(dc).sum() + np.log(denom)
        out += -lens[c] * _LOG_SQRT_2PI - 0.5 * (logdet + quad)
    return float(out)


def normal_loglik_mu_marginal(y, se2, m_off, tau2, mu0, s0):
    """Normal likelihood with the location integrated out analytically.

    ``y_i ~ N(mu + m_off_i, se2_i + tau2)`` with ``mu ~ N(mu0, s0^2)``
    marginalizes to a multivariate normal whose covariance is the diagonal
    plus the rank-one ``s0^2 * 11'``; evaluated via the Woodbury identity.
    """
    d = se2 + tau2
    r = y - m_off - mu0
    inv = 1.0 / d
    a = inv.sum()
    b = (r * inv).sum()
    c = (r * r * inv).sum()
    denom = 1.0 + s0 * s0 * a
    quad = c - s0 * s0 * b * b / denom
    logdet = np.log(d).sum() + np.log(denom)
    return float(-len(y) * _LOG_SQRT_2PI - 0.5 * (logdet + quad))


def clustered_loglik_mu_marginal(y, se2, m_off, tau2, rho, mu0, s0, starts, lens):
    """Cluster-correlated normal likelihood with the location integrated out.

    Combines the per-cluster rank-one structure (``tau2 * rho`` within
    clusters) with the global rank-one update from the normal prior on the
    location.
    """
    s2b = tau2 * rho
    r = y - m_off - mu0
    dvec = se2 + tau2 * (1.0 - rho)
    a = 0.0
    b = 0.0
    c = 0.0
    logdet = 0.0
    for k in range(len(starts)):
        sl = slice(starts[k], starts[k] + lens[k])
        d = dvec[sl]
        rc = r[sl]
        inv = 1.0 / d
        isum = inv.sum()
        denom = 1.0 + s2b * isum
        cb = s2b / denom
        ir = (rc * inv).sum()
        a += isum - cb * isum * isum
        b += ir - cb * isum * ir
        c += (rc * rc * inv).sum() - cb * ir * ir
        logdet += np.log(d).sum() + np.log(denom)
    denom0 = 1.0 + s0 * s0 * a
    quad = c - s0 * s0 * b * b / denom0
    logdet += np.log(denom0)
    return float(-len(y) * _LOG_SQRT_2PI - 0.5 * (logdet + quad))


def _bin_probs(mu, s, thr, two_sided):
    """Probability of each observed-p bin for Y ~ N(mu, s^2).

    ``thr`` holds the y-scale thresholds for one study, decreasing across
    cutpoints; returns ``len(thr) + 1`` probabilities ordered from the
    most-significant bin.
    """
    upper = ndtr((thr - mu) / s)  # P(Y <= t_j)
    if two_sided:
        lower = ndtr((-thr - mu) / s)  # P(Y <= -t_j)
        probs = np.empty(len(thr) + 1)
        probs[0] = 1.0 - upper[0] + lower[0]
        for j in range(1, len(thr)):
            probs[j] = (upper[j - 1] - upper[j]) + (lower[j] - lower[j - 1])
        probs[-1] = upper[-1] - lower[-1]
    else:
        probs = np.empty(len(thr) + 1)
        probs[0] = 1.0 - upper[0]
        for j in range(1, len(thr)):
            probs[j] = upper[j - 1] - upper[j]
        probs[-1] = upper[-1]
    return np.clip(probs, 0.0, None)


def selection_loglik(y, se2, m, tau2, omega, thr, obs_bin, two_sided):
    """Weighted (selection-model) likelihood with independent studies.

    Each study contributes ``log w(p_i) + log phi(y_i; m_i, se2_i + tau2)
    - log A_i`` where ``A_i`` sums the weight function against the bin
    probabilities of ``Y ~ N(m_i, se2_i + tau2)``; ``thr[i, j]`` is the
    y-scale threshold of cutpoint ``j`` for study ``i`` and ``obs_bin[i]``
    the bin of the observed p-value.
    """
    n = y.shape[0]
    s = np.sqrt(se2 + tau2)
    out = 0.0
    for i in range(n):
        probs = _bin_probs(m[i], s[i], thr[i], two_sided)
        a = max(float(np.dot(omega, probs)), _TINY)
        w = max(float(omega[obs_bin[i]]), _TINY)
        out += (
            np.log(w)
            - _LOG_SQRT_2PI
            - np.log(s[i])
            - 0.5 * ((y[i] - m[i]) / s[i]) ** 2
            - np.log(a)
        )
    return float(out)


def selection_clustered_loglik(
    y, se2, m, tau2, rho, omega, thr, obs_bin, two_sided, starts, lens, gh_x, gh_w
):
    """Selection likelihood with a cluster random effect.

    The cluster effect (variance ``tau2*rho``) is integrated by
    Gauss-Hermite quadrature with the selection weighting applied to the
    conditional record densities (conditional variance ``se2 + tau2*(1-rho)``).
    Singleton clusters collapse to the marginal selection form.
    """
    s2b = tau2 * rho
    s2w = tau2 * (1.0 - rho)
    sb = np.sqrt(s2b)
    out = 0.0
    log_gh_w = np.log(gh_w) - 0.5 * np.log(np.pi)
    for c in range(len(starts)):
        sl = slice(starts[c], starts[c] + lens[c])
        if lens[c] == 1:
            out += selection_loglik(
                y[sl], se2[sl], m[sl], tau2, omega, thr[sl], obs_bin[sl], two_sided
            )
            continue
        sw = np.sqrt(se2[sl] + s2w)
        node_ll = np.empty(len(gh_x))
        for h, x in enumerate(gh_x):
            u = np.sqrt(2.0) * sb * x
            ll = 0.0
            for k, i in enumerate(range(starts[c], starts[c] + lens[c])):
                probs = _bin_probs(m[i] + u, sw[k], thr[i], two_sided)
                a = max(float(np.dot(omega, probs)), _TINY)
                w = max(float(omega[obs_bin[i]]), _TINY)
                ll += (
                    np.log(w)
                    - _LOG_SQRT_2PI
                    - np.log(sw[k])
                    - 0.5 * ((y[i] - m[i] - u) / sw[k]) ** 2
                    - np.log(a)
                )
            node_ll[h] = ll
        top = np.max(node_ll + log_gh_w)
        out += top + np.log(np.sum(np.exp(node_ll + log_gh_w - top)))
    return float(out)
