import csv
import json
import os

import numpy as np
import pytest

from bmameta.data import bundled_dataset_path
from bmameta.reporting.cli import main


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def es_csv(tmp_path_factory):
    """Fisher's z effect sizes computed from the bundled correlations."""
    out = tmp_path_factory.mktemp("es") / "cohen_es.csv"
    code = run_cli(
        "escalc",
        "--input", bundled_dataset_path("cohen1981"),
        "--output", str(out),
        "--kind", "fishers-z",
        "--r-column", "r",
        "--n-column", "n",
    )
    assert code == 0
    return out


@pytest.fixture(scope="module")
def small_config(tmp_path_factory, es_csv):
    cfg = {
        "data": {"path": str(es_csv), "schema": {"effect": "effect", "se": "se", "label": "study"}},
        "measure": "fishers_z",
        "transform": "fishers_z_to_r",
        "mcmc": {"chains": 2, "adaptation": 300, "burnin": 300, "sampling": 800, "seed": 1},
        "outputs": {"conditional": True, "mixture_size": 4000},
    }
    path = tmp_path_factory.mktemp("cfg") / "cohen.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


def test_escalc_fishers_z(es_csv):
    with open(es_csv, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 20
    import math

    first = rows[0]
    assert float(first["effect"]) == pytest.approx(math.atanh(float(first["r"])), rel=1e-9)
    assert float(first["se"]) == pytest.approx(1 / math.sqrt(int(first["n"]) - 3), rel=1e-9)


def test_escalc_logor(tmp_path):
    out = tmp_path / "h.csv"
    code = run_cli(
        "escalc",
        "--input", bundled_dataset_path("hasselblad1992"),
        "--output", str(out),
        "--kind", "logor-ci",
    )
    assert code == 0
    with open(out, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9
    assert {"effect", "se", "smoke", "no2", "gender"} <= set(rows[0])


def test_escalc_bad_column_is_user_error(tmp_path, capsys):
    out = tmp_path / "x.csv"
    code = run_cli(
        "escalc", "--input", bundled_dataset_path("cohen1981"),
        "--output", str(out), "--kind", "fishers-z", "--r-column", "missing",
    )
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_validate_ok(small_config, capsys):
    assert run_cli("validate", "--config", str(small_config)) == 0
    assert "valid" in capsys.readouterr().out


def test_validate_bias_without_switch(tmp_path, capsys):
    doc = {
        "data": {"path": "x.csv", "schema": {"effect": "y", "se": "se"}},
        "measure": "smd",
        "model": {"bias_family": "PSMA"},
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    assert run_cli("validate", "--config", str(path)) == 1
    err = capsys.readouterr().err
    assert "$.model" in err


def test_fit_report_round_trip(small_config, tmp_path, capsys):
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    assert run_cli("fit", "--config", str(small_config), "--output-dir", str(out1)) == 0
    capsys.readouterr()
    assert run_cli("fit", "--config", str(small_config), "--output-dir", str(out2)) == 0
    capsys.readouterr()
    # byte-identical outputs under a fixed seed
    for name in ("summary.json", "report.txt", "fits.json"):
        a = (out1 / name).read_bytes()
        b = (out2 / name).read_bytes()
        assert a == b, name
    # report re-renders the stored tables identically
    assert run_cli("report", "--fit", str(out1), "--conditional") == 0
    text = capsys.readouterr().out
    assert text.strip() == (out1 / "report.txt").read_text(encoding="utf-8").strip()
    # json report round-trips through parsing
    assert run_cli("report", "--fit", str(out1), "--format", "json") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc == json.loads((out1 / "summary.json").read_text(encoding="utf-8"))


def test_fit_seed_flag_changes_output(small_config, tmp_path, capsys):
    out1 = tmp_path / "s1"
    out3 = tmp_path / "s3"
    assert run_cli("fit", "--config", str(small_config), "--output-dir", str(out1)) == 0
    assert run_cli("fit", "--config", str(small_config), "--seed", "3", "--output-dir", str(out3)) == 0
    capsys.readouterr()
    assert (out1 / "summary.json").read_bytes() != (out3 / "summary.json").read_bytes()


def test_plot_subcommand(small_config, tmp_path, capsys):
    out = tmp_path / "fitdir"
    assert run_cli("fit", "--config", str(small_config), "--output-dir", str(out)) == 0
    capsys.readouterr()
    for kind, extra in (
        ("trace", ["--parameter", "mu"]),
        ("prior-posterior", ["--parameter", "mu"]),
        ("forest", []),
    ):
        fig = tmp_path / f"{kind}.svg"
        code = run_cli("plot", "--fit", str(out), "--kind", kind, "--output", str(fig), *extra)
        assert code == 0, kind
        svg = fig.read_text(encoding="utf-8")
        assert svg.startswith("<svg")
    # determinism of the svg output
    fig2 = tmp_path / "trace2.svg"
    run_cli("plot", "--fit", str(out), "--kind", "trace", "--parameter", "mu", "--output", str(fig2))
    assert fig2.read_bytes() == (tmp_path / "trace.svg").read_bytes()


def test_plot_trace_requires_parameter(small_config, tmp_path, capsys):
    out = tmp_path / "fitdir"
    run_cli("fit", "--config", str(small_config), "--output-dir", str(out))
    capsys.readouterr()
    code = run_cli("plot", "--fit", str(out), "--kind", "trace", "--output", str(tmp_path / "x.svg"))
    assert code == 1
    assert "parameter" in capsys.readouterr().err


def test_unknown_flag_is_user_error(capsys):
    assert run_cli("fit", "--nonsense") == 1


def test_missing_config_file(capsys, tmp_path):
    assert run_cli("validate", "--config", str(tmp_path / "none.json")) == 1


def test_sensitivity(tmp_path, capsys, es_csv):
    # tiny sensitivity run: default priors versus a rescaled custom profile
    cfg = {
        "data": {"path": str(es_csv), "schema": {"effect": "effect", "se": "se"}},
        "measure": "fishers_z",
        "mcmc": {"chains": 2, "adaptation": 200, "burnin": 200, "sampling": 500, "seed": 1},
        "outputs": {"mixture_size": 2000},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
    alts = [{"name": "wide", "priors": {"source": "default", "scale": 2.5}}]
    alts_path = tmp_path / "alts.json"
    alts_path.write_text(json.dumps(alts), encoding="utf-8")
    out = tmp_path / "sens"
    assert run_cli(
        "sensitivity", "--config", str(cfg_path), "--alternatives", str(alts_path),
        "--output-dir", str(out),
    ) == 0
    text = capsys.readouterr().out
    assert "Prior sensitivity comparison" in text
    assert "scale ratio" in text
    assert "0.400" in text  # base scale 0.5 over wide scale 1.25
    doc = json.loads((out / "sensitivity.json").read_text(encoding="utf-8"))
    assert len(doc) == 2
