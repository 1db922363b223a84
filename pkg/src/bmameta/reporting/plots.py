"""SVG figures: forest, bubble, prior/posterior, trace, weight function,
PET-PEESE regression.

Figures are rendered directly (no plotting library) so output is
deterministic; randomness (bubble jitter) uses a fixed seed-derived stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..averaging import EmmResult, kde_density, ucv_bandwidth
from ..data import Dataset, Transform, apply_transform
from ..inference.mcmc import FitResult
from ..modelspace import DesignMatrix, Ensemble
from ..priors import Family
from .svgfig import Axis, Canvas, fmt, nice_ticks

_CHAIN_COLORS = ("#1b6ca8", "#c4452c", "#3a8a3d", "#8254a2", "#b08c00", "#3aa6a6")


@dataclass(frozen=True)
class PlotSpec:
    """Requested figure: kind plus kind-specific options."""

    kind: str  # forest | bubble | prior_posterior | trace | weight_function | pet_peese
    parameter: str | None = None
    moderator: str | None = None
    conditional: bool = False
    sections: tuple[str, ...] = ("studies", "emm", "model")
    apply_transform: bool = False  # prior/posterior plots stay untransformed by default
    seed: int = 1

    def __post_init__(self):
        kinds = ("forest", "bubble", "prior_posterior", "trace", "weight_function", "pet_peese")
        if self.kind not in kinds:
            raise ValueError(f"unknown plot kind {self.kind!r}; expected one of {kinds}")
        if self.kind in ("trace", "prior_posterior") and not self.parameter:
            raise ValueError(f"{self.kind} plot needs a parameter name")
        if self.kind == "bubble" and not self.moderator:
            raise ValueError("bubble plot needs a moderator")


def trace_plot(fit: FitResult, parameter: str) -> str:
    """Overlaid per-chain sampling paths for one parameter."""
    draws = fit.draws.parameter(parameter)
    m, n = draws.shape
    W, H = 640, 360
    margin_l, margin_r, margin_t, margin_b = 60, 15, 30, 45
    lo, hi = float(draws.min()), float(draws.max())
    pad = 0.05 * (hi - lo) if hi > lo else 0.5
    yax = Axis(lo - pad, hi + pad, H - margin_b, margin_t)
    xax = Axis(0, n - 1, margin_l, W - margin_r)
    c = Canvas(W, H)
    c.text(W / 2, 18, f"Trace of {parameter}", size=13, anchor="middle")
    c.line(margin_l, H - margin_b, W - margin_r, H - margin_b)
    c.line(margin_l, margin_t, margin_l, H - margin_b)
    for t in nice_ticks(yax.lo, yax.hi):
        c.line(margin_l - 4, yax(t), margin_l, yax(t))
        c.text(margin_l - 7, yax(t) + 3.5, f"{t:g}", size=10, anchor="end")
    for t in nice_ticks(0, n - 1, 6):
        c.line(xax(t), H - margin_b, xax(t), H - margin_b + 4)
        c.text(xax(t), H - margin_b + 16, f"{int(t)}", size=10, anchor="middle")
    c.text(W / 2, H - 10, "iteration", size=11, anchor="middle")
    step = max(1, n // 2000)  # cap points per path
    for ci in range(m):
        pts = [(xax(i), yax(draws[ci, i])) for i in range(0, n, step)]
        c.polyline(pts, stroke=_CHAIN_COLORS[ci % len(_CHAIN_COLORS)], width=0.8, opacity=0.85)
    return c.render()


def _grid_density(draws: np.ndarray, grid: np.ndarray) -> np.ndarray:
    h = ucv_bandwidth(draws)
    dens = np.zeros_like(grid)
    sub = draws if len(draws) <= 4000 else np.sort(draws)[np.linspace(0, len(draws) - 1, 4000).astype(int)]
    for x in sub:
        dens += np.exp(-0.5 * ((grid - x) / h) ** 2)
    dens /= len(sub) * h * math.sqrt(2 * math.pi)
    return dens


def prior_posterior_plot(
    ensemble: Ensemble,
    fits: list[FitResult],
    probs: np.ndarray,
    parameter: str,
    posterior_draws: np.ndarray,
    conditional: bool = False,
    transform: Transform = Transform.IDENTITY,
) -> str:
    """Prior (gray) and posterior (black) densities for one parameter.

    Point-mass components are drawn as upward arrows against a secondary
    probability axis on the right.  By default densities stay on the
    analysis scale even when a reporting transform is active; pass
    ``transform`` to override (densities are then re-expressed with the
    change-of-variables Jacobian).
    """
    prior_specs = []
    spike_prior = 0.0
    spike_value = 0.0
    for m in ensemble.models:
        key = "mu" if parameter == "mu" else parameter
        prior = m.priors.get(key)
        if prior is None:
            continue
        if prior.is_point:
            spike_prior += m.prior_prob
            spike_value = prior.params[0]
        else:
            prior_specs.append((m.prior_prob, prior))
    total_cont = sum(w for w, _ in prior_specs)
    if conditional:
        spike_prior = 0.0

    included = np.array([parameter in f.draws.names for f in fits])
    spike_post = float(np.sum(probs[~included])) if not conditional else 0.0
    cont_draws = posterior_draws[posterior_draws != spike_value] if spike_post > 0 else posterior_draws

    lo = float(np.quantile(cont_draws, 0.001))
    hi = float(np.quantile(cont_draws, 0.999))
    span = hi - lo or 1.0
    lo, hi = lo - 0.25 * span, hi + 0.25 * span
    if spike_prior > 0:
        lo, hi = min(lo, spike_value - 0.1 * span), max(hi, spike_value + 0.1 * span)
    grid = np.linspace(lo, hi, 301)
    prior_dens = np.zeros_like(grid)
    for w, prior in prior_specs:
        prior_dens += w * np.exp(np.asarray(prior.logpdf(grid)))
    if total_cont + spike_prior > 0:
        prior_dens /= (total_cont + spike_prior) if not conditional else max(total_cont, 1e-12)
    post_dens = _grid_density(cont_draws, grid) * (1.0 - spike_post)
    if transform is not Transform.IDENTITY:
        # change of variables: densities divide by dt/dx on the new axis
        jac = np.cosh(grid) ** -2 if transform is Transform.FISHERS_Z_TO_R else np.exp(grid)
        prior_dens = prior_dens / jac
        post_dens = post_dens / jac
        grid = np.asarray(apply_transform(transform, grid))
        spike_value = float(apply_transform(transform, spike_value))
        lo, hi = float(grid[0]), float(grid[-1])

    W, H = 560, 360
    ml, mr, mt, mb = 60, 55, 30, 45
    ymax = max(prior_dens.max(), post_dens.max()) * 1.1 or 1.0
    xax = Axis(lo, hi, ml, W - mr)
    yax = Axis(0, ymax, H - mb, mt)
    pax = Axis(0, 1, H - mb, mt)  # secondary probability axis
    c = Canvas(W, H)
    c.text(W / 2, 18, f"Prior and posterior: {parameter}", size=13, anchor="middle")
    c.line(ml, H - mb, W - mr, H - mb)
    c.line(ml, mt, ml, H - mb)
    for t in nice_ticks(lo, hi):
        c.line(xax(t), H - mb, xax(t), H - mb + 4)
        c.text(xax(t), H - mb + 16, f"{t:g}", size=10, anchor="middle")
    for t in nice_ticks(0, ymax, 5):
        c.line(ml - 4, yax(t), ml, yax(t))
        c.text(ml - 7, yax(t) + 3.5, f"{t:g}", size=10, anchor="end")
    c.text(16, (mt + H - mb) / 2, "density", size=11, anchor="middle", rotate=-90)
    c.polyline(list(zip(xax(grid), yax(prior_dens))), stroke="#9b9b9b", width=1.6)
    c.polyline(list(zip(xax(grid), yax(post_dens))), stroke="#000000", width=1.6)
    if spike_prior > 0 or spike_post > 0:
        c.line(W - mr, mt, W - mr, H - mb)
        for t in (0.0, 0.25, 0.5, 0.75, 1.0):
            c.line(W - mr, pax(t), W - mr + 4, pax(t))
            c.text(W - mr + 7, pax(t) + 3.5, f"{t:g}", size=10)
        c.text(W - 12, (mt + H - mb) / 2, "probability", size=11, anchor="middle", rotate=90)

        def arrow(x, mass, color, offset):
            tip = pax(mass)
            c.line(x + offset, pax(0), x + offset, tip, stroke=color, width=2.0)
            c.polygon(
                [(x + offset - 4, tip + 8), (x + offset + 4, tip + 8), (x + offset, tip)], fill=color
            )

        if spike_prior > 0:
            arrow(xax(spike_value), spike_prior, "#9b9b9b", -3)
        if spike_post > 0:
            arrow(xax(spike_value), spike_post, "#000000", 3)
    return c.render()


def forest_plot(
    data: Dataset,
    summary_doc: dict,
    transform: Transform = Transform.IDENTITY,
    sections: tuple[str, ...] = ("studies", "emm", "model"),
) -> str:
    """Forest plot with study, estimated-marginal-means and model sections."""
    rows: list[tuple[str, float, float, float, str]] = []  # label, est, lo, hi, kind
    z = 1.959963984540054
    for r in data.records:
        est, lo, hi = (apply_transform(transform, x) for x in (r.y, r.y - z * r.se, r.y + z * r.se))
        if "studies" in sections:
            rows.append((r.id, est, lo, hi, "study"))
    if "emm" in sections:
        for e in summary_doc.get("emm", []):
            est = e["estimate"]
            rows.append((f"EMM: {e['term']} = {e['level']}", est["median"], est["lower"], est["upper"], "emm"))
    if "model" in sections:
        est_doc = summary_doc["transformed"]["mu"] if summary_doc["transform"] != "identity" else summary_doc["estimates"]["mu"]
        rows.append(("Pooled estimate", est_doc["median"], est_doc["lower"], est_doc["upper"], "model"))
        if est_doc.get("pi_lower") is not None:
            rows.append(("Prediction interval", est_doc["median"], est_doc["pi_lower"], est_doc["pi_upper"], "pi"))

    row_h = 20
    W = 700
    label_w = 230
    H = 70 + row_h * len(rows)
    ml, mr, mt, mb = label_w + 10, 70, 30, 40
    lo = min(r[2] for r in rows)
    hi = max(r[3] for r in rows)
    pad = 0.06 * (hi - lo or 1.0)
    xax = Axis(lo - pad, hi + pad, ml, W - mr)
    c = Canvas(W, H)
    c.text(W / 2, 18, "Forest plot", size=13, anchor="middle")
    null_value = 1.0 if transform is Transform.EXPONENTIAL else 0.0
    if xax.lo < null_value < xax.hi:
        c.line(xax(null_value), mt, xax(null_value), H - mb, stroke="#bbbbbb", dash="4,3")
    y = mt + 12
    for label, est, lo_i, hi_i, kind in rows:
        c.text(8, y + 4, label[:38], size=10)
        c.line(xax(lo_i), y, xax(hi_i), y, stroke="#333333", width=1.2)
        if kind == "study":
            c.rect(xax(est) - 3, y - 3, 6, 6, fill="#444444", stroke="none")
        elif kind == "emm":
            c.circle(xax(est), y, 4, fill="#1b6ca8")
        elif kind == "model":
            c.polygon(
                [(xax(lo_i), y), (xax(est), y - 6), (xax(hi_i), y), (xax(est), y + 6)],
                fill="#000000",
            )
        else:  # prediction interval
            c.line(xax(lo_i), y, xax(hi_i), y, stroke="#777777", width=2.4)
        est_txt = f"{est:.2f} [{lo_i:.2f}, {hi_i:.2f}]"
        c.text(W - 4, y + 4, est_txt, size=9, anchor="end")
        y += row_h
    axis_y = H - mb + 8
    c.line(xax.px_lo, axis_y, xax.px_hi, axis_y)
    for t in nice_ticks(xax.lo, xax.hi):
        c.line(xax(t), axis_y, xax(t), axis_y + 4)
        c.text(xax(t), axis_y + 16, f"{t:g}", size=10, anchor="middle")
    return c.render()


def bubble_plot(
    data: Dataset,
    design: DesignMatrix,
    emm_results: list[EmmResult],
    term: str,
    transform: Transform = Transform.IDENTITY,
    seed: int = 1,
) -> str:
    """Moderator-level boxes (EMM line, CI border) with jittered studies.

    Marker size is proportional to study precision (inverse variance); the
    horizontal jitter stream is seed-derived so output is reproducible.
    """
    block = design.term(term)
    levels = list(block.levels)
    if not levels:
        raise ValueError("bubble plot currently supports categorical moderators")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(37,)))
    W, H = 520, 380
    ml, mr, mt, mb = 60, 20, 30, 50
    est = {e.level: e for e in emm_results if e.term == term}
    y_all = [apply_transform(transform, r.y) for r in data.records]
    los = [float(np.quantile(apply_transform(transform, e.draws), 0.025)) for e in emm_results]
    his = [float(np.quantile(apply_transform(transform, e.draws), 0.975)) for e in emm_results]
    lo, hi = min(min(y_all), *los), max(max(y_all), *his)
    pad = 0.08 * (hi - lo or 1.0)
    yax = Axis(lo - pad, hi + pad, H - mb, mt)
    c = Canvas(W, H)
    c.text(W / 2, 18, f"Bubble plot: {term}", size=13, anchor="middle")
    c.line(ml, mt, ml, H - mb)
    for t in nice_ticks(yax.lo, yax.hi):
        c.line(ml - 4, yax(t), ml, yax(t))
        c.text(ml - 7, yax(t) + 3.5, f"{t:g}", size=10, anchor="end")
    slot_w = (W - ml - mr) / len(levels)
    w_max = max(1.0 / r.se**2 for r in data.records)
    for j, level in enumerate(levels):
        cx = ml + slot_w * (j + 0.5)
        c.text(cx, H - mb + 18, str(level), size=11, anchor="middle")
        if level in est:
            d = apply_transform(transform, est[level].draws)
            lo_j, med_j, hi_j = (float(np.quantile(d, q)) for q in (0.025, 0.5, 0.975))
            c.rect(cx - slot_w * 0.32, yax(hi_j), slot_w * 0.64, yax(lo_j) - yax(hi_j), stroke="#1b6ca8", width=1.4)
            c.line(cx - slot_w * 0.32, yax(med_j), cx + slot_w * 0.32, yax(med_j), stroke="#1b6ca8", width=3.0)
        for r, yv in zip(data.records, y_all):
            if str(r.covariates[term]) != level:
                continue
            jitter = (rng.random() - 0.5) * slot_w * 0.4
            size = 3.0 + 7.0 * math.sqrt((1.0 / r.se**2) / w_max)
            c.circle(cx + jitter, yax(yv), size, fill="#c4452c", opacity=0.45)
    c.text(W / 2, H - 10, term, size=11, anchor="middle")
    c.text(16, (mt + H - mb) / 2, "effect size", size=11, anchor="middle", rotate=-90)
    return c.render()


def weight_function_plot(summary_doc: dict, cutpoints: tuple[float, ...]) -> str:
    """Estimated step weight function over observed p-values (conditional)."""
    omegas = [(k, v) for k, v in summary_doc["bias_estimates"].items() if k.startswith("omega[")]
    if not omegas:
        raise ValueError("no weight-function estimates in this summary")
    means = [1.0] + [v["mean"] for _, v in omegas]
    lows = [1.0] + [v["lower"] for _, v in omegas]
    highs = [1.0] + [v["upper"] for _, v in omegas]
    edges = [0.0, *cutpoints, 1.0]
    W, H = 520, 340
    ml, mr, mt, mb = 60, 20, 30, 45
    xax = Axis(0, 1, ml, W - mr)
    yax = Axis(0, 1.05, H - mb, mt)
    c = Canvas(W, H)
    c.text(W / 2, 18, "Estimated weight function", size=13, anchor="middle")
    c.line(ml, H - mb, W - mr, H - mb)
    c.line(ml, mt, ml, H - mb)
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        c.line(xax(t), H - mb, xax(t), H - mb + 4)
        c.text(xax(t), H - mb + 16, f"{t:g}", size=10, anchor="middle")
        c.line(ml - 4, yax(t), ml, yax(t))
        c.text(ml - 7, yax(t) + 3.5, f"{t:g}", size=10, anchor="end")
    for j in range(len(means)):
        x0, x1 = xax(edges[j]), xax(edges[j + 1])
        c.rect(x0, yax(highs[j]), x1 - x0, max(yax(lows[j]) - yax(highs[j]), 0.01), fill="#d7e4ef", stroke="none")
        c.line(x0, yax(means[j]), x1, yax(means[j]), stroke="#1b6ca8", width=2.2)
        if j + 1 < len(means):
            c.line(x1, yax(means[j]), x1, yax(means[j + 1]), stroke="#1b6ca8", width=1.2, dash="3,2")
    c.text(W / 2, H - 10, "p-value", size=11, anchor="middle")
    c.text(16, (mt + H - mb) / 2, "publication weight", size=11, anchor="middle", rotate=-90)
    return c.render()


def pet_peese_plot(data: Dataset, summary_doc: dict, kind: str = "pet") -> str:
    """Studies against their standard errors plus the PET or PEESE line."""
    if kind not in ("pet", "peese"):
        raise ValueError("kind must be 'pet' or 'peese'")
    slope_est = summary_doc["bias_estimates"].get(kind)
    if slope_est is None:
        raise ValueError(f"no {kind} estimates in this summary")
    mu_est = summary_doc["conditional"].get("mu", summary_doc["estimates"]["mu"])
    W, H = 520, 340
    ml, mr, mt, mb = 60, 20, 30, 45
    se = data.se
    y = data.y
    se_hi = float(se.max()) * 1.1
    xax = Axis(0, se_hi, ml, W - mr)
    lo, hi = float(y.min()), float(y.max())
    pad = 0.1 * (hi - lo or 1.0)
    yax = Axis(lo - pad, hi + pad, H - mb, mt)
    c = Canvas(W, H)
    c.text(W / 2, 18, f"{kind.upper()} regression", size=13, anchor="middle")
    c.line(ml, H - mb, W - mr, H - mb)
    c.line(ml, mt, ml, H - mb)
    for t in nice_ticks(0, se_hi, 6):
        c.line(xax(t), H - mb, xax(t), H - mb + 4)
        c.text(xax(t), H - mb + 16, f"{t:g}", size=10, anchor="middle")
    for t in nice_ticks(yax.lo, yax.hi):
        c.line(ml - 4, yax(t), ml, yax(t))
        c.text(ml - 7, yax(t) + 3.5, f"{t:g}", size=10, anchor="end")
    for yi, si in zip(y, se):
        c.circle(xax(si), yax(yi), 3.2, fill="#444444", opacity=0.7)
    xs = np.linspace(0, se_hi, 60)
    mu0 = mu_est["median"]
    slope = slope_est["median"]
    line = mu0 + slope * (xs if kind == "pet" else xs**2)
    c.polyline(list(zip(xax(xs), yax(line))), stroke="#c4452c", width=2.0)
    c.text(W / 2, H - 10, "standard error", size=11, anchor="middle")
    c.text(16, (mt + H - mb) / 2, "effect size", size=11, anchor="middle", rotate=-90)
    return c.render()
