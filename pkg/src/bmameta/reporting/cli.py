"""Command-line interface.

Subcommands: ``escalc`` (effect-size helpers), ``fit`` (full pipeline),
``report`` and ``plot`` (render from a stored fit), ``sensitivity``
(re-run under alternative prior profiles), ``validate`` (check a
configuration without fitting).  Exit codes: 0 success, 1 user error,
2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from ..averaging import mixture_draws, posterior_model_probs
from ..data import DataError, fishers_z, logor_from_ci
from ..inference.marglik import MarginalLikelihoodError
from ..modelspace import Ensemble
from ..priors import PriorProfile
from .analysis import load_bundle, run_analysis, save_bundle
from .config import ConfigError, load_config, load_config_file, validate_config
from .plots import (
    PlotSpec,
    bubble_plot,
    forest_plot,
    pet_peese_plot,
    prior_posterior_plot,
    trace_plot,
    weight_function_plot,
)
from .tables import render_tables

USER_ERROR = 1
NUMERICAL_ERROR = 2


def _cmd_escalc(args) -> int:
    with open(args.input, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        header = list(reader.fieldnames or [])
    out_rows = []
    for i, row in enumerate(rows, start=1):
        try:
            if args.kind == "fishers-z":
                effect, se = fishers_z(float(row[args.r_column]), int(row[args.n_column]))
            else:
                effect, se = logor_from_ci(
                    float(row[args.or_column]),
                    float(row[args.lower_column]),
                    float(row[args.upper_column]),
                    args.level,
                )
        except (KeyError, ValueError, DataError) as exc:
            raise DataError(f"row {i}: {exc}") from exc
        out_rows.append({**row, "effect": f"{effect:.10g}", "se": f"{se:.10g}"})
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=header + ["effect", "se"])
        writer.writeheader()
        writer.writerows(out_rows)
    print(f"wrote {len(out_rows)} rows to {args.output}")
    return 0


def _cmd_validate(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        doc = json.load(fh)
    errors = validate_config(doc)
    if errors:
        for e in errors:
            print(f"invalid: {e}", file=sys.stderr)
        return USER_ERROR
    load_config(doc, base_dir=os.path.dirname(os.path.abspath(args.config)))
    print("configuration is valid")
    return 0


def _cmd_fit(args) -> int:
    config = load_config_file(args.config, seed_override=args.seed)
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    result = run_analysis(config, progress=progress)
    save_bundle(result, args.output_dir)
    print(result.report_text())
    print(f"fit bundle written to {args.output_dir}")
    return 0


def _cmd_report(args) -> int:
    summary_doc, fits_doc, _, _ = load_bundle(args.fit)
    if args.format == "json":
        print(json.dumps(summary_doc, indent=1, sort_keys=True))
    else:
        print(render_tables(summary_doc, bf_direction=args.bf, conditional=args.conditional))
    return 0


@dataclass
class _StoredFit:
    draws: object


def _cmd_plot(args) -> int:
    summary_doc, fits_doc, dataset, draws = load_bundle(args.fit)
    spec = PlotSpec(
        kind=args.kind.replace("-", "_"),
        parameter=args.parameter,
        moderator=args.moderator,
        conditional=args.conditional,
        apply_transform=getattr(args, "transformed", False),
        seed=args.jitter_seed,
    )
    with open(os.path.join(args.fit, "ensemble.json"), encoding="utf-8") as fh:
        ensemble = Ensemble.from_json(json.load(fh))
    with open(os.path.join(args.fit, "config.json"), encoding="utf-8") as fh:
        config = load_config(json.load(fh), base_dir=args.fit)
    from .analysis import rebuild_fit_results
    from ..modelspace import build_design

    stored = rebuild_fit_results(fits_doc, draws)
    fits = [_StoredFit(draws=pd) for _, pd in stored]
    probs = np.asarray(fits_doc["probs"])
    design = build_design(dataset, config.moderators) if config.moderators else None

    if spec.kind == "trace":
        best = None
        for (label, pd), p in zip(stored, probs):
            if spec.parameter in pd.names and (best is None or p > best[0]):
                best = (p, pd)
        if best is None:
            raise DataError(f"no sampled model carries parameter {spec.parameter!r}")
        svg = trace_plot(_StoredFit(draws=best[1]), spec.parameter)
    elif spec.kind == "prior_posterior":
        mode = "conditional" if spec.conditional else "averaged"
        post = mixture_draws(fits, probs, [spec.parameter], mode=mode, seed=config.mcmc.seed)[spec.parameter]
        transform = config.transform if spec.apply_transform else None
        from ..data import Transform as _T

        svg = prior_posterior_plot(ensemble, fits, probs, spec.parameter, post,
                                   conditional=spec.conditional,
                                   transform=transform or _T.IDENTITY)
    elif spec.kind == "forest":
        svg = forest_plot(dataset, summary_doc, transform=config.transform)
    elif spec.kind == "bubble":
        from ..averaging import estimated_marginal_means

        emms = estimated_marginal_means(
            ensemble, fits, probs, design, spec.moderator, seed=config.mcmc.seed
        )
        svg = bubble_plot(dataset, design, emms, spec.moderator, transform=config.transform, seed=spec.seed)
    elif spec.kind == "weight_function":
        cut = None
        for m in ensemble.models:
            if m.bias.kind == "selection":
                cut = m.bias.weight_prior.cutpoints
                break
        if cut is None:
            raise DataError("no selection models in this ensemble")
        svg = weight_function_plot(summary_doc, cut)
    else:  # pet_peese
        svg = pet_peese_plot(dataset, summary_doc, kind=args.slope)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(svg)
    print(f"wrote {args.output}")
    return 0


def _cmd_sensitivity(args) -> int:
    config = load_config_file(args.config, seed_override=args.seed)
    with open(args.alternatives, encoding="utf-8") as fh:
        alternatives = json.load(fh)
    if not isinstance(alternatives, list):
        raise ConfigError("$.alternatives: expected a list of named prior specifications")
    runs = [("base", config)]
    for i, alt in enumerate(alternatives):
        doc = json.loads(json.dumps(config.raw))
        doc["priors"] = alt.get("priors", {})
        name = alt.get("name", f"alternative {i + 1}")
        runs.append((name, load_config(doc, base_dir=os.path.dirname(os.path.abspath(args.config)), seed_override=args.seed)))

    rows = []
    scales = {}
    for name, cfg in runs:
        result = run_analysis(cfg)
        scales[name] = cfg.profile.effect_scale
        entry = {"profile": name, "effect_scale": cfg.profile.effect_scale}
        for t in result.summary.tests:
            entry[f"bf:{t.component}"] = t.bf
        est = result.summary.transformed["mu"] if cfg.transform.value != "identity" else result.summary.estimates["mu"]
        entry["mu_median"] = est.median
        entry["mu_lower"] = est.lower
        entry["mu_upper"] = est.upper
        rows.append(entry)

    base_scale = rows[0]["effect_scale"]
    lines = ["Prior sensitivity comparison", ""]
    keys = [k for k in rows[0] if k != "profile"]
    header = ["Profile"] + keys
    table = [[r["profile"]] + [("inf" if isinstance(r.get(k), float) and math.isinf(r.get(k)) else f"{r.get(k):.3f}" if isinstance(r.get(k), float) else "-") for k in keys] for r in rows]
    widths = [max(len(header[j]), *(len(t[j]) for t in table)) for j in range(len(header))]
    lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    lines.append("-" * (sum(widths) + 2 * (len(widths) - 1)))
    for t in table:
        lines.append("  ".join(c.ljust(w) for c, w in zip(t, widths)))
    lines.append("")
    for r in rows[1:]:
        ratio = base_scale / r["effect_scale"] if r["effect_scale"] else float("nan")
        lines.append(
            f"Effect-prior scale ratio base/{r['profile']}: {ratio:.3f} "
            f"(base scale {base_scale:.3f}, {r['profile']} scale {r['effect_scale']:.3f})"
        )
    text = "\n".join(lines) + "\n"
    os.makedirs(args.output_dir, exist_ok=True)
    with open(os.path.join(args.output_dir, "sensitivity.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    with open(os.path.join(args.output_dir, "sensitivity.json"), "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=1, sort_keys=True, default=str)
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bmameta", description="Bayesian model-averaged meta-analysis")
    sub = p.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("escalc", help="compute effect sizes from raw study statistics")
    pe.add_argument("--input", required=True)
    pe.add_argument("--output", required=True)
    pe.add_argument("--kind", choices=["fishers-z", "logor-ci"], required=True)
    pe.add_argument("--r-column", default="r")
    pe.add_argument("--n-column", default="n")
    pe.add_argument("--or-column", default="or")
    pe.add_argument("--lower-column", default="ci_lower")
    pe.add_argument("--upper-column", default="ci_upper")
    pe.add_argument("--level", type=float, default=0.95)
    pe.set_defaults(func=_cmd_escalc)

    pv = sub.add_parser("validate", help="validate a configuration without fitting")
    pv.add_argument("--config", required=True)
    pv.set_defaults(func=_cmd_validate)

    pf = sub.add_parser("fit", help="run the full pipeline from a configuration")
    pf.add_argument("--config", required=True)
    pf.add_argument("--output-dir", required=True)
    pf.add_argument("--seed", type=int, default=None, help="override the config seed")
    pf.add_argument("--verbose", action="store_true")
    pf.set_defaults(func=_cmd_fit)

    pr = sub.add_parser("report", help="render tables from a stored fit")
    pr.add_argument("--fit", required=True, help="fit bundle directory")
    pr.add_argument("--format", choices=["text", "json"], default="text")
    pr.add_argument("--bf", choices=["BF10", "BF01", "LogBF10"], default="BF10")
    pr.add_argument("--conditional", action="store_true")
    pr.set_defaults(func=_cmd_report)

    pp = sub.add_parser("plot", help="render an SVG figure from a stored fit")
    pp.add_argument("--fit", required=True)
    pp.add_argument(
        "--kind",
        choices=["forest", "bubble", "prior-posterior", "trace", "weight-function", "pet-peese"],
        required=True,
    )
    pp.add_argument("--parameter", default=None)
    pp.add_argument("--moderator", default=None)
    pp.add_argument("--conditional", action="store_true")
    pp.add_argument("--transformed", action="store_true",
                    help="apply the reporting transform to prior/posterior densities")
    pp.add_argument("--slope", choices=["pet", "peese"], default="pet")
    pp.add_argument("--jitter-seed", type=int, default=1)
    pp.add_argument("--output", required=True)
    pp.set_defaults(func=_cmd_plot)

    ps = sub.add_parser("sensitivity", help="re-run under alternative prior profiles and compare")
    ps.add_argument("--config", required=True)
    ps.add_argument("--alternatives", required=True, help="JSON list of {name, priors} objects")
    ps.add_argument("--output-dir", required=True)
    ps.add_argument("--seed", type=int, default=None)
    ps.set_defaults(func=_cmd_sensitivity)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USER_ERROR if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, DataError, FileNotFoundError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USER_ERROR
    except (MarginalLikelihoodError, RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
