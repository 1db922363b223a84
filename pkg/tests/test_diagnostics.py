import numpy as np
import pytest

from bmameta.inference.diagnostics import Diag, diagnose, ess, mcse, rhat


def test_rhat_iid_chains():
    rng = np.random.default_rng(42)
    chains = rng.standard_normal((2, 50_000))
    assert 1.0 <= rhat(chains) <= 1.01


def test_rhat_detects_mean_shift():
    rng = np.random.default_rng(43)
    chains = rng.standard_normal((2, 5_000))
    chains[1] += 1.5
    assert rhat(chains) > 1.2


def test_rhat_needs_two_chains():
    with pytest.raises(ValueError):
        rhat(np.zeros((1, 100)) + np.arange(100))


def test_rhat_constant_draws_degenerate():
    d = diagnose(np.ones((4, 500)))
    assert d.rhat == 1.0
    assert d.degenerate


def test_ess_iid_band():
    # 10,000 iid draws across 4 chains; the estimate carries sampling noise,
    # hence the wide tolerance band (seed held fixed)
    rng = np.random.default_rng(7)
    draws = rng.standard_normal((4, 2_500))
    assert 9_000 <= ess(draws) <= 11_000


def test_ess_ar1():
    # AR(1) with phi = 0.9: asymptotic ESS is n (1 - phi) / (1 + phi) = n / 19
    rng = np.random.default_rng(11)
    phi = 0.9
    n = 200_000
    eps = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = eps[0]
    for i in range(1, n):
        x[i] = phi * x[i - 1] + eps[i]
    expected = n * (1 - phi) / (1 + phi)
    assert ess(x) == pytest.approx(expected, rel=0.30)


def test_ess_capped_at_total():
    rng = np.random.default_rng(13)
    # antithetic pairs are negatively correlated; the cap still applies
    base = rng.standard_normal(5_000)
    draws = np.empty(10_000)
    draws[0::2] = base
    draws[1::2] = -base
    assert ess(draws) <= 10_000


def test_mcse_relations():
    rng = np.random.default_rng(5)
    draws = rng.standard_normal((4, 4_000))
    absolute, relative = mcse(draws)
    e = ess(draws)
    sd = draws.std(ddof=1)
    assert relative == pytest.approx(1.0 / np.sqrt(e), rel=1e-12)
    assert absolute == pytest.approx(sd / np.sqrt(e), rel=1e-12)


def test_diagnose_bundle():
    rng = np.random.default_rng(3)
    d = diagnose(rng.standard_normal((4, 2_000)))
    assert isinstance(d, Diag)
    assert d.ess <= 8_000
    assert 0.99 <= d.rhat <= 1.02
    assert not d.degenerate
