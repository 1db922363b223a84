"""Backend equivalence: the numba kernels and the numpy reference must agree."""

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from bmameta._kernels import reference

jit = pytest.importorskip("bmameta._kernels.jit")


def _instance(rng, n, n_clusters=3, n_cut=2):
    y = rng.normal(0, 0.5, n)
    se2 = rng.uniform(0.02, 0.3, n) ** 2
    m = rng.normal(0, 0.2, n)
    codes = np.sort(rng.integers(0, n_clusters, n))
    uniq, starts, lens = np.unique(codes, return_index=True, return_counts=True)
    thr = np.outer(np.sqrt(se2), np.sort(rng.uniform(0.5, 2.5, n_cut))[::-1])
    obs_bin = rng.integers(0, n_cut + 1, n).astype(np.int64)
    omega = np.sort(rng.uniform(0.05, 1, n_cut + 1))[::-1]
    omega[0] = 1.0
    gh_x, gh_w = np.polynomial.hermite.hermgauss(21)
    return dict(
        y=y, se2=se2, m=m,
        starts=starts.astype(np.int64), lens=lens.astype(np.int64),
        thr=np.ascontiguousarray(thr), obs_bin=obs_bin, omega=omega,
        gh_x=gh_x, gh_w=gh_w,
    )


@pytest.mark.parametrize("trial", range(6))
def test_normal_kernels_agree(trial):
    rng = np.random.default_rng(100 + trial)
    d = _instance(rng, int(rng.integers(2, 30)))
    tau2 = float(rng.uniform(0, 0.4))
    a = reference.normal_loglik(d["y"], d["se2"], d["m"], tau2)
    b = jit.normal_loglik(d["y"], d["se2"], d["m"], tau2)
    assert a == pytest.approx(b, abs=1e-10)


@pytest.mark.parametrize("trial", range(6))
def test_clustered_kernels_agree(trial):
    rng = np.random.default_rng(200 + trial)
    d = _instance(rng, int(rng.integers(4, 25)))
    tau2 = float(rng.uniform(0.01, 0.4))
    rho = float(rng.uniform(0, 1))
    a = reference.clustered_loglik(d["y"], d["se2"], d["m"], tau2, rho, d["starts"], d["lens"])
    b = jit.clustered_loglik(d["y"], d["se2"], d["m"], tau2, rho, d["starts"], d["lens"])
    assert a == pytest.approx(b, abs=1e-10)


@pytest.mark.parametrize("two_sided", [True, False])
def test_selection_kernels_agree(two_sided):
    for trial in range(6):
        rng = np.random.default_rng(300 + trial)
        d = _instance(rng, int(rng.integers(2, 20)))
        tau2 = float(rng.uniform(0, 0.3))
        a = reference.selection_loglik(d["y"], d["se2"], d["m"], tau2, d["omega"], d["thr"], d["obs_bin"], two_sided)
        b = jit.selection_loglik(d["y"], d["se2"], d["m"], tau2, d["omega"], d["thr"], d["obs_bin"], two_sided)
        assert a == pytest.approx(b, abs=1e-9)


@pytest.mark.parametrize("two_sided", [True, False])
def test_selection_clustered_kernels_agree(two_sided):
    for trial in range(6):
        rng = np.random.default_rng(400 + trial)
        d = _instance(rng, int(rng.integers(4, 20)))
        tau2 = float(rng.uniform(0.01, 0.3))
        rho = float(rng.uniform(0, 1))
        args = (d["y"], d["se2"], d["m"], tau2, rho, d["omega"], d["thr"], d["obs_bin"], two_sided,
                d["starts"], d["lens"], d["gh_x"], d["gh_w"])
        assert reference.selection_clustered_loglik(*args) == pytest.approx(
            jit.selection_clustered_loglik(*args), abs=1e-9
        )


@pytest.mark.parametrize("impl", [reference, None], ids=["numpy", "numba"])
def test_mu_marginal_kernels_against_dense_oracle(impl):
    impl = impl or jit
    rng = np.random.default_rng(77)
    for trial in range(5):
        n = int(rng.integers(2, 12))
        d = _instance(rng, n)
        tau2 = float(rng.uniform(0, 0.3))
        mu0, s0 = float(rng.normal()), float(rng.uniform(0.2, 1.5))
        got = impl.normal_loglik_mu_marginal(d["y"], d["se2"], d["m"], tau2, mu0, s0)
        cov = np.diag(d["se2"] + tau2) + s0**2 * np.ones((n, n))
        expected = multivariate_normal.logpdf(d["y"], d["m"] + mu0, cov)
        assert got == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("impl", [reference, None], ids=["numpy", "numba"])
def test_clustered_mu_marginal_against_dense_oracle(impl):
    impl = impl or jit
    rng = np.random.default_rng(88)
    for trial in range(5):
        n = int(rng.integers(4, 14))
        d = _instance(rng, n)
        tau2 = float(rng.uniform(0.01, 0.3))
        rho = float(rng.uniform(0, 1))
        mu0, s0 = float(rng.normal()), float(rng.uniform(0.2, 1.5))
        got = impl.clustered_loglik_mu_marginal(
            d["y"], d["se2"], d["m"], tau2, rho, mu0, s0, d["starts"], d["lens"]
        )
        cov = np.diag(d["se2"] + tau2 * (1 - rho)) + s0**2 * np.ones((n, n))
        for s, l in zip(d["starts"], d["lens"]):
            cov[s : s + l, s : s + l] += tau2 * rho
        expected = multivariate_normal.logpdf(d["y"], d["m"] + mu0, cov)
        assert got == pytest.approx(expected, abs=1e-9)


def test_backend_name_reports():
    from bmameta._kernels import backend_name

    assert backend_name() in ("numba", "numpy")
