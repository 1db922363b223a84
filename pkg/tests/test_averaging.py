import math

import numpy as np
import pytest
from scipy.stats import kstest, norm

import bmameta as bm
from bmameta.averaging import (
    BF_INSTABILITY_THRESHOLD,
    ComponentTest,
    averaged_draws,
    estimated_marginal_means,
    evidence_label,
    i_squared,
    inclusion_bf,
    kde_density,
    mixture_draws,
    posterior_model_probs,
    prediction_interval,
    savage_dickey_bf,
    summarize,
    typical_sampling_variance,
    ucv_bandwidth,
)
from bmameta.data import Dataset, Measure, StudyRecord, Transform
from bmameta.inference import McmcSettings, fit_model, log_marginal_likelihood
from bmameta.likelihood import LikelihoodContext
from bmameta.modelspace import ModelSpec, build_design, build_ensemble
from bmameta.priors import default_profile, normal, point


@pytest.fixture(scope="module")
def conjugate_pair(single_study_ctx_module):
    """H1 (mu free) and H0 (mu = 0) fits of the one-study conjugate problem."""
    ctx = single_study_ctx_module
    settings = McmcSettings(chains=4, adaptation=500, burnin=500, sampling=20_000, seed=21)
    h1 = ModelSpec(effect=True, heterogeneity=False, priors={"mu": normal(0, 1), "tau": point()}, prior_prob=0.5)
    h0 = ModelSpec(effect=False, heterogeneity=False, priors={"mu": point(), "tau": point()}, prior_prob=0.5)
    f1 = fit_model(h1, ctx, settings, stream_key=(0,))
    f0 = fit_model(h0, ctx, settings, stream_key=(1,))
    return [f1, f0]


@pytest.fixture(scope="module")
def single_study_ctx_module():
    ds = Dataset(records=(StudyRecord("s1", 0.3, 0.1),))
    return LikelihoodContext(ds)


def _fake_fit(log_marglik, prior_prob, names=(), chains=None):
    from bmameta.inference.mcmc import FitResult, PosteriorDraws

    spec = ModelSpec(
        effect=True,
        heterogeneity=False,
        priors={"mu": normal(0, 1), "tau": point()},
        prior_prob=prior_prob,
    )
    draws = PosteriorDraws(names=tuple(names), chains=chains if chains is not None else np.empty((2, 0, 0)))
    return FitResult(
        model=spec, draws=draws, draws_unc=np.empty((2, 0, 0)),
        log_marglik=log_marglik, log_marglik_mcse=0.0, marglik_method="exact",
        diagnostics={}, warnings=(), settings=McmcSettings(),
    )


def test_posterior_model_probs_equal():
    fits = [_fake_fit(-3.0, 0.25) for _ in range(4)]
    probs = posterior_model_probs(fits)
    assert np.allclose(probs, 0.25)


def test_posterior_model_probs_bf999():
    fits = [_fake_fit(math.log(999.0), 0.5), _fake_fit(0.0, 0.5)]
    probs = posterior_model_probs(fits)
    assert probs[0] == pytest.approx(0.999, abs=1e-12)
    assert probs[1] == pytest.approx(0.001, abs=1e-12)


def test_posterior_model_probs_rejects_nan():
    with pytest.raises(ValueError):
        posterior_model_probs([_fake_fit(math.nan, 1.0)])


def test_inclusion_bf_identity_and_examples():
    ens = build_ensemble(default_profile(Measure.SMD))
    probs = np.array([0.70, 0.18, 0.08, 0.04])
    for comp in ("effect", "heterogeneity"):
        t = inclusion_bf(probs, ens, comp)
        post_odds = t.posterior_prob / (1 - t.posterior_prob)
        prior_odds = t.prior_prob / (1 - t.prior_prob)
        assert post_odds == pytest.approx(t.bf * prior_odds, abs=1e-10)
        assert t.bf01() == pytest.approx(1.0 / t.bf)


def test_inclusion_bf_999_with_instability_display():
    ens = build_ensemble(default_profile(Measure.SMD), heterogeneity_bma=False)
    probs = np.array([0.999, 0.001])
    t = inclusion_bf(probs, ens, "effect")
    assert t.bf == pytest.approx(999.0, rel=1e-9)
    assert not t.display_infinite
    assert t.bf > BF_INSTABILITY_THRESHOLD


def test_inclusion_bf_infinite_display():
    ens = build_ensemble(default_profile(Measure.SMD), heterogeneity_bma=False)
    probs = np.array([1.0 - 1e-14, 1e-14])
    t = inclusion_bf(probs, ens, "effect")
    assert t.display_infinite
    assert t.bf > 1e13  # numeric value retained


def test_inclusion_bf_single_model_not_applicable():
    ens = build_ensemble(default_profile(Measure.SMD), effect_bma=False, heterogeneity_bma=False)
    t = inclusion_bf(np.array([1.0]), ens, "effect")
    assert t.bf is None
    assert t.prior_prob == 1.0


def test_posterior_equals_prior_gives_unit_bf():
    ens = build_ensemble(default_profile(Measure.SMD))
    probs = np.array([m.prior_prob for m in ens.models])
    t = inclusion_bf(probs, ens, "effect")
    assert t.bf == pytest.approx(1.0, abs=1e-12)


# --- draw mixing -------------------------------------------------------------


def _fits_with_draws():
    rng = np.random.default_rng(8)
    chains_a = np.stack([np.stack([rng.normal(0.5, 0.1, 1000)], axis=1)] * 2)  # (2, 1000, 1)
    a = _fake_fit(0.0, 0.5, names=("tau",), chains=chains_a)
    b = _fake_fit(0.0, 0.5)  # exclusion model: tau fixed at 0
    return [a, b]


def test_averaged_vs_conditional_shrinkage():
    fits = _fits_with_draws()
    probs = np.array([0.5, 0.5])
    avg = averaged_draws(fits, probs, "tau", mode="averaged", size=4000, seed=2)
    cond = averaged_draws(fits, probs, "tau", mode="conditional", size=4000, seed=2)
    assert avg.mean() < cond.mean()
    assert np.mean(avg == 0.0) == pytest.approx(0.5, abs=0.02)
    assert np.all(cond > 0)


def test_single_model_mixture_equals_model_draws(conjugate_pair):
    f1 = conjugate_pair[0]
    probs = np.array([1.0])
    avg = averaged_draws([f1], probs, "mu", mode="averaged", size=2000, seed=3)
    cond = averaged_draws([f1], probs, "mu", mode="conditional", size=2000, seed=3)
    assert np.array_equal(avg, cond)
    pool = set(f1.draws.pooled("mu"))
    assert set(avg).issubset(pool)


def test_mixture_degenerate_weights():
    fits = _fits_with_draws()
    probs = np.array([1.0, 0.0])
    avg = averaged_draws(fits, probs, "tau", mode="averaged", size=1000, seed=4)
    assert np.all(avg > 0)


def test_mixture_joint_rows_preserve_dependence():
    rng = np.random.default_rng(9)
    base = rng.normal(0, 1, (2, 500))
    chains = np.stack([np.stack([base[c], 2 * base[c]], axis=1) for c in range(2)])
    fit = _fake_fit(0.0, 1.0, names=("mu", "tau"), chains=chains)
    out = mixture_draws([fit], np.array([1.0]), ["mu", "tau"], size=3000, seed=5)
    assert np.allclose(out["tau"], 2 * out["mu"], atol=1e-12)


def test_conditional_without_mass_errors():
    fits = [_fits_with_draws()[1]]
    with pytest.raises(ValueError, match="no posterior mass"):
        averaged_draws(fits, np.array([1.0]), "tau", mode="conditional")


def test_averaged_converges_to_conditional_as_exclusion_vanishes():
    fits = _fits_with_draws()
    cond = averaged_draws(fits, np.array([0.5, 0.5]), "tau", mode="conditional", size=5000, seed=6)
    nearly = averaged_draws(fits, np.array([1.0 - 1e-9, 1e-9]), "tau", mode="averaged", size=5000, seed=6)
    res = kstest(nearly, lambda x: np.searchsorted(np.sort(cond), x) / len(cond))
    assert res.pvalue > 0.001


# --- intervals and heterogeneity stats ---------------------------------------


def test_prediction_interval_collapses_when_tau_zero(rng):
    mu = rng.normal(0.4, 0.05, 20_000)
    tau = np.zeros_like(mu)
    lo, hi = prediction_interval(mu, tau, 0.95, seed=3)
    assert lo == pytest.approx(bm.data.quantile(mu, 0.025), abs=2e-3)
    assert hi == pytest.approx(bm.data.quantile(mu, 0.975), abs=2e-3)


def test_prediction_interval_standard_normal(rng):
    n = 100_000
    mu = np.zeros(n)
    tau = np.ones(n)
    lo, hi = prediction_interval(mu, tau, 0.95, seed=4)
    assert lo == pytest.approx(-1.96, abs=0.05)
    assert hi == pytest.approx(1.96, abs=0.05)


def test_i_squared_values():
    se = np.full(10, 0.2)
    assert typical_sampling_variance(se) == pytest.approx(0.04, rel=1e-12)
    assert i_squared(np.array([0.0]), se)[0] == 0.0
    assert i_squared(np.array([0.2]), se)[0] == pytest.approx(50.0, abs=1e-9)


# --- Savage-Dickey -----------------------------------------------------------


def test_kde_matches_normal_density(rng):
    draws = rng.normal(0, 1, 20_000)
    d = kde_density(draws, 0.0)
    assert d == pytest.approx(norm.pdf(0), rel=0.05)


def test_kde_boundary_reflection(rng):
    draws = np.abs(rng.normal(0, 1, 20_000))  # half-normal: density 2*phi(0) at 0
    d_plain = kde_density(draws, 0.0)
    d_reflect = kde_density(draws, 0.0, boundary=0.0)
    assert d_reflect == pytest.approx(2 * norm.pdf(0), rel=0.05)
    assert d_plain < d_reflect


def test_savage_dickey_matches_marglik_ratio(conjugate_pair, single_study_ctx_module):
    f1, f0 = conjugate_pair
    # exact BF10 from the marginal likelihoods
    bf_exact = math.exp(f1.log_marglik - f0.log_marglik)
    rng = np.random.default_rng(10)
    prior_draws = rng.normal(0, 1, 40_000)
    post_draws = f1.draws.pooled("mu")
    bf_sd = savage_dickey_bf(prior_draws, post_draws, at=0.0)
    # tolerance: asymptotic KDE standard error at the evaluation point, with
    # the draw count discounted to the effective sample size of the chain
    h = ucv_bandwidth(post_draws)
    dens = kde_density(post_draws, 0.0)
    n_eff = f1.diagnostics["mu"].ess
    rel_se = math.sqrt(0.2821 / (n_eff * h * dens))
    assert bf_sd == pytest.approx(bf_exact, rel=3 * rel_se + 0.10)


def test_savage_dickey_ignores_exact_atoms(rng):
    cont = rng.normal(0.5, 0.2, 10_000)
    with_atoms = np.concatenate([cont, np.zeros(10_000)])
    bf_pure = savage_dickey_bf(rng.normal(0, 1, 20_000), cont)
    bf_mixed = savage_dickey_bf(rng.normal(0, 1, 20_000), with_atoms)
    # the atom halves the continuous mass, doubling the Bayes factor
    assert bf_mixed == pytest.approx(2 * bf_pure, rel=0.1)


def test_ucv_bandwidth_reasonable(rng):
    draws = rng.normal(0, 1, 5_000)
    h = ucv_bandwidth(draws)
    assert 0.05 < h < 1.0


# --- EMMs --------------------------------------------------------------------


def test_emm_intercept_equals_effect_draws(conjugate_pair):
    f1 = conjugate_pair[0]
    spec1 = bm.modelspace.ModelSpec(
        effect=True, heterogeneity=False, priors={"mu": normal(0, 1), "tau": point()}, prior_prob=1.0
    )
    ens = bm.modelspace.Ensemble(models=(spec1,))
    res = estimated_marginal_means(ens, [f1], np.array([1.0]), None, "intercept", size=3000, seed=4)
    assert len(res) == 1
    pool = set(f1.draws.pooled("mu"))
    assert set(res[0].draws).issubset(pool)


def test_emm_unknown_term(conjugate_pair):
    from dataclasses import replace as dc_replace

    spec1 = dc_replace(conjugate_pair[0].model, prior_prob=1.0)
    ens = bm.modelspace.Ensemble(models=(spec1,))
    with pytest.raises(KeyError):
        estimated_marginal_means(ens, [conjugate_pair[0]], np.array([1.0]), None, "nope")


def test_evidence_labels():
    assert evidence_label(2.0) == "weak evidence for"
    assert evidence_label(5.0) == "moderate evidence for"
    assert evidence_label(50.0) == "strong evidence for"
    assert evidence_label(500.0) == "extreme evidence for"
    assert evidence_label(0.5) == "weak evidence against"
    assert evidence_label(0.05) == "strong evidence against"


# --- summaries ---------------------------------------------------------------


def test_summarize_two_by_two(cohen_dataset, fast_settings):
    ctx = LikelihoodContext(cohen_dataset)
    profile = default_profile(Measure.FISHERS_Z)
    ens = build_ensemble(profile)
    fits = [fit_model(m, ctx, fast_settings, stream_key=(i,)) for i, m in enumerate(ens.models)]
    summary = summarize(ens, fits, cohen_dataset.se, transform=Transform.FISHERS_Z_TO_R, seed=5, size=8000)
    comps = {t.component for t in summary.tests}
    assert comps == {"effect", "heterogeneity"}
    assert summary.estimates["mu"].pi_lower is not None
    assert summary.transformed["mu"].median == pytest.approx(
        math.tanh(summary.estimates["mu"].median), abs=1e-9
    )
    # averaged tau shrinks toward zero relative to conditional
    assert summary.estimates["tau"].mean < summary.conditional["tau"].mean
    assert 0 <= summary.estimates["i2"].median <= 100
    doc = summary.to_json()
    assert doc["tests"][0]["component"] == "effect"
    eff = next(t for t in summary.tests if t.component == "effect")
    assert any("unstable" in f for f in summary.footnotes) == (
        eff.bf is not None and (eff.display_infinite or eff.bf > 100)
    )


def test_prediction_interval_wider_than_ci(cohen_dataset, fast_settings):
    ctx = LikelihoodContext(cohen_dataset)
    ens = build_ensemble(default_profile(Measure.FISHERS_Z))
    fits = [fit_model(m, ctx, fast_settings, stream_key=(i,)) for i, m in enumerate(ens.models)]
    summary = summarize(ens, fits, cohen_dataset.se, transform=Transform.FISHERS_Z_TO_R, seed=5, size=8000)
    est = summary.transformed["mu"]
    assert est.pi_lower < est.lower
    assert est.pi_upper > est.upper
