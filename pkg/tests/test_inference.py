import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm

import bmameta as bm
from bmameta.data import Dataset, StudyRecord
from bmameta.inference import (
    AutofitSettings,
    McmcSettings,
    autofit,
    fit_model,
    log_marginal_likelihood,
)
from bmameta.inference.program import ModelProgram
from bmameta.likelihood import LikelihoodContext
from bmameta.modelspace import ModelSpec, build_ensemble
from bmameta.priors import default_profile, normal, point, uniform


def _fixed_effect_spec(prior=None):
    return ModelSpec(
        effect=True,
        heterogeneity=False,
        priors={"mu": prior or normal(0, 1), "tau": point(0.0)},
    )


def test_settings_validation():
    with pytest.raises(ValueError):
        McmcSettings(chains=1)
    with pytest.raises(ValueError):
        McmcSettings(sampling=0)


def test_conjugate_posterior(single_study_ctx):
    spec = _fixed_effect_spec()
    fit = fit_model(spec, single_study_ctx, McmcSettings(chains=4, adaptation=500, burnin=500, sampling=4000, seed=3))
    mu = fit.draws.pooled("mu")
    # y = 0.3, se = 0.1, prior N(0, 1): exact posterior N(0.297030, 0.099504)
    post_mean = 0.3 * 100 / 101
    post_sd = math.sqrt(1 / 101)
    assert mu.mean() == pytest.approx(post_mean, abs=4 * fit.diagnostics["mu"].mcse)
    assert mu.std(ddof=1) == pytest.approx(post_sd, rel=0.05)


def test_zero_parameter_model_is_exact(single_study_ctx):
    spec = ModelSpec(effect=False, heterogeneity=False, priors={"mu": point(0.0), "tau": point(0.0)})
    fit = fit_model(spec, single_study_ctx, McmcSettings())
    assert fit.draws.names == ()
    assert fit.log_marglik == pytest.approx(norm.logpdf(0.3, 0, 0.1), abs=1e-12)
    assert fit.log_marglik_mcse == 0.0
    assert fit.marglik_method == "exact"


def test_fit_determinism(single_study_ctx, fast_settings):
    spec = _fixed_effect_spec()
    a = fit_model(spec, single_study_ctx, fast_settings, stream_key=(4,))
    b = fit_model(spec, single_study_ctx, fast_settings, stream_key=(4,))
    assert np.array_equal(a.draws.chains, b.draws.chains)
    assert a.log_marglik == b.log_marglik
    c = fit_model(spec, single_study_ctx, fast_settings, stream_key=(5,))
    assert not np.array_equal(a.draws.chains, c.draws.chains)


def test_acceptance_rate_in_band(single_study_ctx):
    spec = _fixed_effect_spec()
    fit = fit_model(spec, single_study_ctx, McmcSettings(chains=2, adaptation=1500, burnin=500, sampling=4000, seed=9))
    draws = fit.draws.parameter("mu")
    # acceptance rate per chain approximated by the fraction of moves
    for chain in draws:
        moves = np.mean(chain[1:] != chain[:-1])
        assert 0.15 < moves < 0.5


def test_initialization_failure_raises():
    # a slope prior so heavy-tailed that every draw overflows the likelihood
    from bmameta.modelspace import BiasVariant
    from bmameta.priors import cauchy

    ds = Dataset(records=(StudyRecord("s", 0.0, 1.0),))
    ctx = LikelihoodContext(ds)
    bad = ModelSpec(
        effect=True,
        heterogeneity=False,
        bias=BiasVariant("pet", slope_prior=cauchy(0.0, 1e308, truncation=(0.0, math.inf))),
        priors={
            "mu": normal(0, 1),
            "tau": point(0.0),
            "pet": cauchy(0.0, 1e308, truncation=(0.0, math.inf)),
        },
    )
    with pytest.raises(RuntimeError, match="initialization"):
        fit_model(bad, ctx, McmcSettings(chains=2, adaptation=10, burnin=10, sampling=10, seed=1))


def test_low_ess_warning(single_study_ctx):
    spec = _fixed_effect_spec()
    fit = fit_model(spec, single_study_ctx, McmcSettings(chains=2, adaptation=50, burnin=50, sampling=60, seed=2))
    assert any("effective sample size" in w for w in fit.warnings)


# --- marginal likelihoods ---------------------------------------------------


def test_fixed_effect_marglik_closed_form(rng):
    n = 5
    recs = tuple(StudyRecord(f"s{i}", float(rng.normal(0.2, 0.3)), float(rng.uniform(0.1, 0.3))) for i in range(n))
    ds = Dataset(records=recs)
    ctx = LikelihoodContext(ds)
    spec = _fixed_effect_spec(normal(0.0, 1.0))
    exact = multivariate_normal.logpdf(ds.y, np.zeros(n), np.diag(ds.se**2) + np.ones((n, n)))
    quad_res = log_marginal_likelihood(spec, ctx, method="quadrature")
    assert quad_res.value == pytest.approx(exact, abs=1e-6)
    bridge_res = log_marginal_likelihood(
        spec, ctx, method="bridge", settings=McmcSettings(chains=4, adaptation=500, burnin=500, sampling=3000, seed=5)
    )
    assert bridge_res.value == pytest.approx(exact, abs=max(3 * bridge_res.mcse, 1e-3))
    assert bridge_res.mcse > 0


def test_quadrature_vs_bridge_random_effects(cohen_dataset):
    ctx = LikelihoodContext(cohen_dataset)
    profile = default_profile(bm.Measure.FISHERS_Z)
    ens = build_ensemble(profile, effect_bma=False, heterogeneity_bma=False)
    spec = ens.models[0]
    q = log_marginal_likelihood(spec, ctx, method="quadrature")
    b = log_marginal_likelihood(
        spec, ctx, method="bridge", settings=McmcSettings(chains=4, adaptation=800, burnin=800, sampling=4000, seed=11)
    )
    assert q.value == pytest.approx(b.value, abs=3 * b.mcse + 1e-8)


def test_quadrature_rejects_too_many_dims(hasselblad_dataset):
    from bmameta.inference.marglik import MarginalLikelihoodError
    from bmameta.modelspace import build_design

    design = build_design(hasselblad_dataset, ["smoke", "no2", "gender"])
    ens = build_ensemble(
        default_profile(bm.Measure.LOGOR),
        moderators=["smoke", "no2", "gender"],
        design=design,
        dataset=hasselblad_dataset,
    )
    full = next(m for m in ens.models if len(m.moderators) == 3 and m.effect and m.heterogeneity)
    ctx = LikelihoodContext(hasselblad_dataset, design)
    with pytest.raises(MarginalLikelihoodError, match="at most 3"):
        log_marginal_likelihood(full, ctx, method="quadrature")


def test_program_prior_transform_round_trip(single_study_ctx):
    spec = ModelSpec(
        effect=True,
        heterogeneity=True,
        priors={"mu": normal(0.1, 0.7), "tau": bm.priors.invgamma(1.2, 0.4)},
    )
    program = ModelProgram(spec, single_study_ctx)
    rng = np.random.default_rng(2)
    z = program.sample_unc(rng)
    theta = program.theta(z)
    # log-prior in unconstrained space integrates to 1 over the cube mapping
    u = np.array([0.3, 0.8])
    t2 = program.theta_from_unit(u)
    assert t2.mu == pytest.approx(float(spec.priors["mu"].ppf(0.3)), rel=1e-9)
    assert t2.tau == pytest.approx(float(spec.priors["tau"].ppf(0.8)), rel=1e-9)
    assert math.isfinite(program.logpost_unc(z))
    assert theta.tau > 0


# --- autofit ----------------------------------------------------------------


def test_autofit_single_round_when_target_met(single_study_ctx):
    settings = McmcSettings(
        chains=2, adaptation=400, burnin=400, sampling=2500, seed=3,
        autofit=AutofitSettings(target_ess=300, max_time=300),
    )
    fit = autofit(_fixed_effect_spec(), single_study_ctx, settings)
    assert fit.min_ess >= 300
    schedule = [w for w in fit.warnings if "schedule" in w]
    assert schedule and schedule[0].endswith("2500")


def test_autofit_doubles_until_target(single_study_ctx):
    settings = McmcSettings(
        chains=2, adaptation=300, burnin=300, sampling=200, seed=3,
        autofit=AutofitSettings(target_ess=400, max_time=300),
    )
    fit = autofit(_fixed_effect_spec(), single_study_ctx, settings)
    assert fit.min_ess >= 400
    schedule = next(w for w in fit.warnings if "schedule" in w)
    assert "200" in schedule and ("400" in schedule or "800" in schedule)


def test_autofit_zero_time_budget_returns_best_effort(single_study_ctx):
    settings = McmcSettings(
        chains=2, adaptation=100, burnin=100, sampling=50, seed=3,
        autofit=AutofitSettings(target_ess=5_000, max_time=0.0),
    )
    fit = autofit(_fixed_effect_spec(), single_study_ctx, settings)
    assert any("maximum fitting time" in w for w in fit.warnings)
    assert fit.min_ess < 5_000


def test_autofit_requires_settings(single_study_ctx):
    with pytest.raises(ValueError, match="autofit"):
        autofit(_fixed_effect_spec(), single_study_ctx, McmcSettings())
