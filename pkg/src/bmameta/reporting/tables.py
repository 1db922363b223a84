"""Plain-text rendering of ensemble summaries.

The renderer consumes the JSON form of a summary so that a report written
to disk re-renders byte-identically after a round trip.
"""

from __future__ import annotations

import math

from ..averaging import EnsembleSummary, evidence_label

_COMPONENT_LABELS = {
    "effect": "Pooled effect",
    "heterogeneity": "Heterogeneity",
    "bias": "Publication bias",
}

_PARAM_LABELS = {
    "mu": "Pooled effect",
    "tau": "Heterogeneity (tau)",
    "rho": "Variance allocation (rho)",
    "i2": "I^2 (%)",
}


def _fmt(x, nd=3) -> str:
    if x is None:
        return "-"
    if isinstance(x, str):
        return x
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.{nd}f}"


def _fmt_bf(bf, display_infinite=False, direction="BF10") -> str:
    if bf is None:
        return "-"
    if isinstance(bf, str):
        bf = math.inf
    if direction == "BF01":
        bf = math.inf if bf == 0 else 1.0 / bf
        display_infinite = display_infinite and bf == math.inf
    elif direction == "LogBF10":
        return "inf" if (display_infinite or bf == math.inf) else _fmt(math.log(bf))
    if display_infinite or math.isinf(bf):
        return "inf"
    return f"{bf:.3f}" if bf >= 0.001 else f"{bf:.3e}"


def _table(header: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(header[j]), *(len(r[j]) for r in rows)) if rows else len(header[j]) for j in range(len(header))]
    def line(cells):
        return "  ".join(c.ljust(w) if j == 0 else c.rjust(w) for j, (c, w) in enumerate(zip(cells, widths)))
    sep = "-" * len(line(header))
    return [line(header), sep] + [line(r) for r in rows]


def component_label(component: str, has_moderators: bool) -> str:
    if component == "effect" and has_moderators:
        return "Adjusted effect"
    if component.startswith("moderator:"):
        return component.split(":", 1)[1]
    return _COMPONENT_LABELS.get(component, component)


def render_tables(summary_doc: dict, bf_direction: str = "BF10", conditional: bool = False) -> str:
    """Render the full text report from a summary JSON document.

    ``bf_direction`` switches the Bayes-factor column between BF10, BF01 and
    LogBF10; ``conditional`` adds the conditional-estimate tables.
    """
    if isinstance(summary_doc, EnsembleSummary):
        summary_doc = summary_doc.to_json()
    has_mod = summary_doc["has_moderators"]
    lines: list[str] = []
    level_pct = f"{summary_doc.get('interval_level', 0.95) * 100:g}%"

    lines.append("Meta-Analytic Tests")
    rows = []
    main_tests = [t for t in summary_doc["tests"] if not t["component"].startswith("moderator:")]
    for t in main_tests:
        rows.append(
            [
                component_label(t["component"], has_mod),
                _fmt(t["prior_prob"]),
                _fmt(t["posterior_prob"]),
                _fmt_bf(t["bf"], t["display_infinite"], bf_direction),
            ]
        )
    lines += _table(["Component", "P(M)", "P(M|data)", bf_direction.replace("LogBF10", "log(BF10)")], rows)
    lines.append("")

    def estimates_block(title: str, key_raw: str, key_tr: str) -> None:
        est = dict(summary_doc[key_raw])
        est_tr = summary_doc.get(key_tr, {})
        if not est:
            return
        lines.append(title)
        rows = []
        for name in ("mu", "tau", "rho", "i2"):
            if name not in est:
                continue
            e = est_tr.get(name, est[name]) if summary_doc["transform"] != "identity" else est[name]
            row = [_PARAM_LABELS[name], _fmt(e["mean"]), _fmt(e["median"]), _fmt(e["lower"]), _fmt(e["upper"])]
            if "pi_lower" in e:
                row += [_fmt(e["pi_lower"]), _fmt(e["pi_upper"])]
            else:
                row += ["-", "-"]
            rows.append(row)
        lines.extend(
            _table(
                ["Parameter", "Mean", "Median", f"{level_pct} lower", f"{level_pct} upper", "PI lower", "PI upper"],
                rows,
            )
        )
        lines.append("")

    estimates_block("Meta-Analytic Estimates", "estimates", "transformed")
    if conditional and summary_doc["conditional"]:
        estimates_block("Conditional Meta-Analytic Estimates", "conditional", "conditional_transformed")

    mod_tests = [t for t in summary_doc["tests"] if t["component"].startswith("moderator:")]
    if mod_tests:
        lines.append("Meta-Regression Terms Tests")
        rows = [
            [
                component_label(t["component"], has_mod),
                _fmt(t["prior_prob"]),
                _fmt(t["posterior_prob"]),
                _fmt_bf(t["bf"], t["display_infinite"], bf_direction),
            ]
            for t in mod_tests
        ]
        lines += _table(["Term", "P(M)", "P(M|data)", bf_direction.replace("LogBF10", "log(BF10)")], rows)
        lines.append("")

    if summary_doc["coefficients"]:
        lines.append("Meta-Regression Coefficients")
        rows = []
        for name, e in summary_doc["coefficients"].items():
            rows.append([name.removeprefix("beta:"), _fmt(e["mean"]), _fmt(e["median"]), _fmt(e["lower"]), _fmt(e["upper"])])
        lines += _table(["Coefficient", "Mean", "Median", f"{level_pct} lower", f"{level_pct} upper"], rows)
        lines.append("")
        if conditional and summary_doc["conditional_coefficients"]:
            lines.append("Conditional Meta-Regression Coefficients")
            rows = []
            for name, e in summary_doc["conditional_coefficients"].items():
                rows.append([name.removeprefix("beta:"), _fmt(e["mean"]), _fmt(e["median"]), _fmt(e["lower"]), _fmt(e["upper"])])
            lines += _table(["Coefficient", "Mean", "Median", f"{level_pct} lower", f"{level_pct} upper"], rows)
            lines.append("")

    if summary_doc["emm"]:
        lines.append("Estimated Marginal Means")
        rows = []
        for e in summary_doc["emm"]:
            est = e["estimate"]
            rows.append(
                [
                    f"{e['term']} = {e['level']}",
                    _fmt(est["mean"]),
                    _fmt(est["median"]),
                    _fmt(est["lower"]),
                    _fmt(est["upper"]),
                    _fmt_bf(e["bf"], False, bf_direction) if e["bf"] is not None else "-",
                ]
            )
        lines += _table(["Level", "Mean", "Median", f"{level_pct} lower", f"{level_pct} upper", bf_direction], rows)
        lines.append("")

    omega_rows = [(k, v) for k, v in summary_doc["bias_estimates"].items() if k.startswith("omega[")]
    slope_rows = [(k, v) for k, v in summary_doc["bias_estimates"].items() if k in ("pet", "peese")]
    if omega_rows:
        lines.append("Weight Function Estimates (conditional)")
        rows = [[k, _fmt(v["mean"]), _fmt(v["median"]), _fmt(v["lower"]), _fmt(v["upper"])] for k, v in omega_rows]
        lines += _table(["Weight", "Mean", "Median", f"{level_pct} lower", f"{level_pct} upper"], rows)
        lines.append("")
    if slope_rows:
        lines.append("PET-PEESE Estimates (conditional)")
        rows = [[k.upper(), _fmt(v["mean"]), _fmt(v["median"]), _fmt(v["lower"]), _fmt(v["upper"])] for k, v in slope_rows]
        lines += _table(["Slope", "Mean", "Median", f"{level_pct} lower", f"{level_pct} upper"], rows)
        lines.append("")

    notes: list[str] = []
    for t in summary_doc["tests"]:
        bf = t["bf"]
        if bf is None:
            continue
        value = math.inf if isinstance(bf, str) else bf
        label = component_label(t["component"], has_mod)
        notes.append(f"{label}: {evidence_label(value)}.")
    for fn in summary_doc["footnotes"]:
        notes.append(f"Note: {fn}")
    for w in summary_doc["warnings"]:
        notes.append(f"Warning: {w}")
    if notes:
        lines.extend(notes)
        lines.append("")
    return "\n".join(lines)
