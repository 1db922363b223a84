"""MCMC convergence diagnostics: split-chain rank-normalized R-hat,
autocorrelation-based effective sample size, and Monte Carlo standard errors.

Follows the rank-normalization recipe of Vehtari, Gelman, Simpson, Carpenter
and Burkner (2021) and Geyer's initial-positive-sequence truncation for the
autocorrelation sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri


@dataclass(frozen=True)
class Diag:
    """Per-parameter convergence summary."""

    mcse: float
    relative_mcse: float
    ess: float
    rhat: float
    degenerate: bool = False


def _as_chains(draws) -> np.ndarray:
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("draws must be (chains, iterations) or (iterations,)")
    return x


def _split(x: np.ndarray) -> np.ndarray:
    m, n = x.shape
    half = n // 2
    return np.vstack([x[:, :half], x[:, half : 2 * half]])


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    flat = x.ravel()
    ranks = np.argsort(np.argsort(flat, kind="stable"), kind="stable") + 1.0
    s = flat.size
    z = ndtri((ranks - 0.375) / (s + 0.25))
    return z.reshape(x.shape)


def _rhat_basic(x: np.ndarray) -> float:
    m, n = x.shape
    if m < 2 or n < 2:
        return float("nan")
    chain_means = x.mean(axis=1)
    w = float(np.mean(x.var(axis=1, ddof=1)))
    b = n * float(np.var(chain_means, ddof=1))
    if w <= 0:
        return float("nan")
    var_plus = (n - 1) / n * w + b / n
    return float(np.sqrt(var_plus / w))


def rhat(draws) -> float:
    """Split-chain rank-normalized R-hat (max of bulk and folded variants).

    Constant draws are degenerate; they report 1.0 (see :func:`diagnose` for
    the accompanying flag).
    """
    x = _as_chains(draws)
    if x.shape[0] < 2:
        raise ValueError("rhat needs at least 2 chains")
    if np.ptp(x) == 0:
        return 1.0
    xs = _split(x)
    bulk = _rhat_basic(_rank_normalize(xs))
    folded = _rhat_basic(_rank_normalize(np.abs(xs - np.median(xs))))
    return float(np.nanmax([bulk, folded]))


def _chain_autocov(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance per chain via FFT, lags 0..n-1."""
    m, n = x.shape
    centered = x - x.mean(axis=1, keepdims=True)
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(centered, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n].real
    return acov / n


def ess(draws) -> float:
    """Effective sample size from combined-chain autocorrelations.

    The lag sum uses Geyer's initial positive sequence: paired
    autocorrelations are accumulated until a pair sum turns negative.  The
    result is capped at the total number of draws.
    """
    x = _as_chains(draws)
    m, n = x.shape
    total = m * n
    if np.ptp(x) == 0:
        return float(total)
    acov = _chain_autocov(x)
    chain_var = acov[:, 0] * n / (n - 1.0)
    w = float(np.mean(chain_var))
    mean_acov = acov.mean(axis=0)
    if m > 1:
        b_over_n = float(np.var(x.mean(axis=1), ddof=1))
    else:
        b_over_n = 0.0
    var_plus = w * (n - 1.0) / n + b_over_n
    if var_plus <= 0:
        return float(total)
    rho = 1.0 - (w - mean_acov) / var_plus  # lag 0 gives rho ~ 1
    tau = 0.0
    max_pairs = (n - 1) // 2
    prev_pair = np.inf
    for k in range(max_pairs):
        pair = rho[2 * k] + rho[2 * k + 1]
        if k > 0 and pair < 0:
            break
        # initial monotone sequence: cap noise-inflated pair sums
        pair = min(pair, prev_pair)
        prev_pair = pair
        tau += pair
    tau = max(2.0 * tau - 1.0, 1.0 / np.log10(total + 10.0))
    return float(min(total / tau, total))


def mcse(draws) -> tuple[float, float]:
    """(absolute, relative) Monte Carlo standard error of the posterior mean.

    Absolute is ``sd / sqrt(ess)``; relative is expressed against the
    posterior sd, i.e. ``1 / sqrt(ess)``.
    """
    x = _as_chains(draws)
    sd = float(x.std(ddof=1))
    e = ess(x)
    rel = 1.0 / np.sqrt(e)
    return sd * rel, float(rel)


def diagnose(draws) -> Diag:
    """Full per-parameter diagnostic bundle."""
    x = _as_chains(draws)
    degenerate = bool(np.ptp(x) == 0)
    if degenerate:
        return Diag(mcse=0.0, relative_mcse=0.0, ess=float(x.size), rhat=1.0, degenerate=True)
    r = rhat(x) if x.shape[0] >= 2 else float("nan")
    a, rel = mcse(x)
    return Diag(mcse=a, relative_mcse=rel, ess=ess(x), rhat=r, degenerate=False)
