import json
import math

import numpy as np
import pytest

import bmameta as bm
from bmameta.averaging import posterior_model_probs, summarize
from bmameta.data import Measure, Transform
from bmameta.inference import McmcSettings, fit_model
from bmameta.likelihood import LikelihoodContext
from bmameta.modelspace import build_design, build_ensemble
from bmameta.priors import default_profile
from bmameta.reporting.config import ConfigError, load_config, validate_config
from bmameta.reporting.plots import (
    PlotSpec,
    bubble_plot,
    forest_plot,
    prior_posterior_plot,
    trace_plot,
)
from bmameta.reporting.svgfig import Axis, Canvas, nice_ticks
from bmameta.reporting.tables import render_tables


@pytest.fixture(scope="module")
def cohen_bma(cohen_dataset):
    cohen = cohen_dataset
    ctx = LikelihoodContext(cohen)
    profile = default_profile(Measure.FISHERS_Z)
    ens = build_ensemble(profile)
    settings = McmcSettings(chains=2, adaptation=400, burnin=400, sampling=1500, seed=13)
    fits = [fit_model(m, ctx, settings, stream_key=(i,)) for i, m in enumerate(ens.models)]
    probs = posterior_model_probs(fits)
    summary = summarize(ens, fits, cohen.se, transform=Transform.FISHERS_Z_TO_R, seed=13, size=6000)
    return ens, fits, probs, summary, cohen


def test_render_tables_structure(cohen_bma):
    _, _, _, summary, _ = cohen_bma
    text = render_tables(summary, conditional=True)
    assert "Meta-Analytic Tests" in text
    assert "Meta-Analytic Estimates" in text
    assert "Conditional Meta-Analytic Estimates" in text
    assert "Pooled effect" in text and "Heterogeneity" in text
    # no moderators -> no meta-regression tables
    assert "Meta-Regression" not in text


def test_render_tables_round_trip(cohen_bma):
    _, _, _, summary, _ = cohen_bma
    doc = summary.to_json()
    direct = render_tables(doc, conditional=True)
    reparsed = render_tables(json.loads(json.dumps(doc)), conditional=True)
    assert direct == reparsed


def test_warnings_surface_verbatim(cohen_bma):
    ens, fits, probs, _, cohen = cohen_bma
    from dataclasses import replace

    noisy = [replace(f, warnings=("synthetic warning for the report",)) for f in fits]
    summary = summarize(ens, noisy, cohen.se, seed=13, size=4000)
    text = render_tables(summary)
    assert "synthetic warning for the report" in text
    doc = summary.to_json()
    assert any("synthetic warning for the report" in w for w in doc["warnings"])


def test_bf_direction_rendering(cohen_bma):
    _, _, _, summary, _ = cohen_bma
    bf10 = render_tables(summary, bf_direction="BF10")
    bf01 = render_tables(summary, bf_direction="BF01")
    logbf = render_tables(summary, bf_direction="LogBF10")
    assert bf10 != bf01 != logbf
    assert "BF01" in bf01 and "log(BF10)" in logbf


def test_infinite_bf_rendered_as_inf():
    from bmameta.reporting.tables import _fmt_bf

    assert _fmt_bf(math.inf) == "inf"
    assert _fmt_bf(1e20, display_infinite=True) == "inf"
    assert _fmt_bf(999.0) == "999.000"
    assert _fmt_bf(999.0, direction="BF01") == "0.001"


# --- svg ---------------------------------------------------------------------


def test_canvas_renders_valid_svg():
    c = Canvas(100, 80)
    c.line(0, 0, 10, 10)
    c.text(5, 5, "a <b> & c")
    svg = c.render()
    assert svg.startswith("<svg ") and svg.endswith("</svg>\n")
    assert "&lt;b&gt;" in svg and "&amp;" in svg


def test_nice_ticks_cover_range():
    ticks = nice_ticks(0.0, 1.0)
    assert ticks[0] >= 0.0 and ticks[-1] <= 1.0
    assert len(ticks) >= 3
    assert nice_ticks(2.0, 2.0) == [2.0]


def test_axis_mapping():
    ax = Axis(0, 10, 100, 200)
    assert ax(0) == 100 and ax(10) == 200 and ax(5) == 150


def test_plot_spec_validation():
    with pytest.raises(ValueError, match="parameter"):
        PlotSpec(kind="trace")
    with pytest.raises(ValueError, match="moderator"):
        PlotSpec(kind="bubble")
    with pytest.raises(ValueError, match="unknown plot kind"):
        PlotSpec(kind="pie")


def test_trace_plot_deterministic(cohen_bma):
    _, fits, _, _, _ = cohen_bma
    full = next(f for f in fits if "mu" in f.draws.names)
    a = trace_plot(full, "mu")
    b = trace_plot(full, "mu")
    assert a == b
    assert a.count("<polyline") == full.draws.chains.shape[0]
    with pytest.raises(KeyError):
        trace_plot(full, "nope")


def test_prior_posterior_plot_has_spike_arrows(cohen_bma):
    ens, fits, probs, _, _ = cohen_bma
    from bmameta.averaging import averaged_draws

    tau_avg = averaged_draws(fits, probs, "tau", mode="averaged", size=6000, seed=13)
    svg = prior_posterior_plot(ens, fits, probs, "tau", tau_avg)
    assert "<polygon" in svg  # arrowheads for the null spikes
    assert "probability" in svg
    svg_cond = prior_posterior_plot(
        ens, fits, probs, "tau",
        averaged_draws(fits, probs, "tau", mode="conditional", size=6000, seed=13),
        conditional=True,
    )
    assert svg_cond != svg


def test_forest_plot_sections(cohen_bma):
    _, _, _, summary, cohen = cohen_bma
    svg = forest_plot(cohen, summary.to_json(), transform=Transform.FISHERS_Z_TO_R)
    assert "Pooled estimate" in svg
    assert "Prediction interval" in svg
    assert svg.count("<rect") >= len(cohen.records)
    # reruns identical
    assert svg == forest_plot(cohen, summary.to_json(), transform=Transform.FISHERS_Z_TO_R)


def test_bubble_plot_jitter_deterministic(hasselblad_dataset):
    design = build_design(hasselblad_dataset, ["gender"])
    rng = np.random.default_rng(4)
    from bmameta.averaging import EmmResult

    emms = [
        EmmResult(term="gender", level="yes", draws=rng.normal(0.23, 0.05, 2000)),
        EmmResult(term="gender", level="no", draws=rng.normal(0.05, 0.05, 2000)),
    ]
    a = bubble_plot(hasselblad_dataset, design, emms, "gender", seed=5)
    b = bubble_plot(hasselblad_dataset, design, emms, "gender", seed=5)
    c = bubble_plot(hasselblad_dataset, design, emms, "gender", seed=6)
    assert a == b
    assert a != c


# --- config ------------------------------------------------------------------


def _minimal_config():
    return {
        "data": {"path": "x.csv", "schema": {"effect": "y", "se": "se"}},
        "measure": "smd",
    }


def test_config_minimal_valid():
    assert validate_config(_minimal_config()) == []


def test_config_bias_family_without_switch_rejected():
    doc = _minimal_config()
    doc["model"] = {"bias_family": "PSMA"}
    errors = validate_config(doc)
    assert errors
    assert any("bias" in e for e in errors)


def test_config_unknown_key_rejected_with_path():
    doc = _minimal_config()
    doc["extra"] = 1
    errors = validate_config(doc)
    assert errors and errors[0].startswith("$")


def test_config_medicine_requires_subfield():
    doc = _minimal_config()
    doc["priors"] = {"source": "medicine"}
    assert validate_config(doc)
    doc["priors"]["subfield"] = "General"
    assert validate_config(doc) == []


def test_load_config_defaults():
    doc = _minimal_config()
    cfg = load_config(doc)
    assert cfg.effect_bma and cfg.heterogeneity_bma and not cfg.bias_bma
    assert cfg.transform is Transform.IDENTITY
    assert cfg.mcmc.seed == 1
    assert cfg.mcmc.chains == 4


def test_load_config_seed_override():
    cfg = load_config(_minimal_config(), seed_override=42)
    assert cfg.mcmc.seed == 42


def test_load_config_invalid_raises_with_pointer():
    doc = _minimal_config()
    doc["mcmc"] = {"chains": 1}
    with pytest.raises(ConfigError, match=r"\$\.mcmc\.chains"):
        load_config(doc)


def test_prior_posterior_transform_override(cohen_bma):
    ens, fits, probs, _, _ = cohen_bma
    from bmameta.averaging import averaged_draws

    mu_draws = averaged_draws(fits, probs, "mu", mode="conditional", size=6000, seed=13)
    plain = prior_posterior_plot(ens, fits, probs, "mu", mu_draws, conditional=True)
    transformed = prior_posterior_plot(
        ens, fits, probs, "mu", mu_draws, conditional=True, transform=Transform.FISHERS_Z_TO_R
    )
    assert plain != transformed
