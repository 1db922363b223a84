"""End-to-end pipeline: configuration -> dataset -> ensemble -> fits -> summary.

The fitted bundle can be written to and reloaded from a directory, so
reports and figures can be produced later without refitting.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from ..averaging import EnsembleSummary, posterior_model_probs, summarize
from ..data import Dataset, load_csv
from ..inference.diagnostics import Diag
from ..inference.mcmc import FitResult, PosteriorDraws, autofit, fit_model
from ..likelihood import LikelihoodContext
from ..modelspace import DesignMatrix, Ensemble, build_design, build_ensemble
from .config import AnalysisConfig
from .tables import render_tables


@dataclass
class AnalysisResult:
    config: AnalysisConfig
    dataset: Dataset
    design: DesignMatrix | None
    ensemble: Ensemble
    fits: list[FitResult]
    probs: np.ndarray
    summary: EnsembleSummary

    def report_text(self) -> str:
        return render_tables(
            self.summary.to_json(),
            bf_direction=self.config.bf_direction,
            conditional=self.config.conditional,
        )


def run_analysis(config: AnalysisConfig, progress=None) -> AnalysisResult:
    """Execute the full pipeline described by ``config``."""
    dataset = load_csv(config.data_path, config.data_schema, config.measure)
    design = build_design(dataset, config.moderators) if config.moderators else None
    ensemble = build_ensemble(
        config.profile,
        effect_bma=config.effect_bma,
        heterogeneity_bma=config.heterogeneity_bma,
        bias_bma=config.bias_bma,
        bias_family=config.bias_family,
        moderators=config.moderators,
        moderator_bma=config.moderator_bma,
        design=design,
        multilevel=config.multilevel,
        dataset=dataset,
    )
    ctx = LikelihoodContext(dataset, design)
    fits = []
    for i, model in enumerate(ensemble.models):
        if progress:
            progress(f"fitting model {i + 1}/{len(ensemble)}: {model.label}")
        if config.mcmc.autofit is not None:
            fit = autofit(model, ctx, config.mcmc, stream_key=(i,), marglik_method=config.marglik_method)
        else:
            fit = fit_model(model, ctx, config.mcmc, stream_key=(i,), marglik_method=config.marglik_method)
        fits.append(fit)
    probs = posterior_model_probs(fits)
    summary = summarize(
        ensemble,
        fits,
        dataset.se,
        design=design,
        transform=config.transform,
        level=config.interval_level,
        seed=config.mcmc.seed,
        emm_terms=config.emm_terms,
        emm_test=config.emm_test,
        size=config.mixture_size,
    )
    return AnalysisResult(
        config=config,
        dataset=dataset,
        design=design,
        ensemble=ensemble,
        fits=fits,
        probs=probs,
        summary=summary,
    )


def render_plot(result: AnalysisResult, spec) -> str:
    """Render one figure from a completed analysis.

    ``spec`` is a :class:`bmameta.reporting.plots.PlotSpec`; returns the SVG
    document as a string.
    """
    from ..averaging import estimated_marginal_means, mixture_draws
    from .plots import (
        bubble_plot,
        forest_plot,
        pet_peese_plot,
        prior_posterior_plot,
        trace_plot,
        weight_function_plot,
    )

    summary_doc = result.summary.to_json()
    if spec.kind == "trace":
        best = None
        for fit, p in zip(result.fits, result.probs):
            if spec.parameter in fit.draws.names and (best is None or p > best[0]):
                best = (p, fit)
        if best is None:
            raise ValueError(f"no sampled model carries parameter {spec.parameter!r}")
        return trace_plot(best[1], spec.parameter)
    if spec.kind == "prior_posterior":
        mode = "conditional" if spec.conditional else "averaged"
        post = mixture_draws(result.fits, result.probs, [spec.parameter], mode=mode,
                             seed=result.config.mcmc.seed)[spec.parameter]
        from ..data import Transform as _T

        return prior_posterior_plot(
            result.ensemble, result.fits, result.probs, spec.parameter, post,
            conditional=spec.conditional,
            transform=result.config.transform if spec.apply_transform else _T.IDENTITY,
        )
    if spec.kind == "forest":
        return forest_plot(result.dataset, summary_doc, transform=result.config.transform,
                           sections=spec.sections)
    if spec.kind == "bubble":
        emms = estimated_marginal_means(result.ensemble, result.fits, result.probs,
                                        result.design, spec.moderator, seed=result.config.mcmc.seed)
        return bubble_plot(result.dataset, result.design, emms, spec.moderator,
                           transform=result.config.transform, seed=spec.seed)
    if spec.kind == "weight_function":
        for m in result.ensemble.models:
            if m.bias.kind == "selection":
                return weight_function_plot(summary_doc, m.bias.weight_prior.cutpoints)
        raise ValueError("no selection models in this ensemble")
    return pet_peese_plot(result.dataset, summary_doc, kind="pet" if spec.parameter in (None, "pet") else spec.parameter)


def save_bundle(result: AnalysisResult, out_dir: str) -> None:
    """Persist everything needed for later reports and figures."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(result.config.raw, fh, indent=1, sort_keys=True)
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(result.summary.to_json(), fh, indent=1, sort_keys=True)
    with open(os.path.join(out_dir, "ensemble.json"), "w", encoding="utf-8") as fh:
        json.dump(result.ensemble.to_json(), fh, indent=1, sort_keys=True)
    with open(os.path.join(out_dir, "dataset.json"), "w", encoding="utf-8") as fh:
        json.dump(result.dataset.to_json(), fh, indent=1, sort_keys=True)
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(result.report_text())
    manifest = []
    arrays = {}
    for i, fit in enumerate(result.fits):
        manifest.append(
            {
                "index": i,
                "label": fit.model.label,
                "names": list(fit.draws.names),
                "log_marglik": fit.log_marglik,
                "log_marglik_mcse": fit.log_marglik_mcse,
                "marglik_method": fit.marglik_method,
                "warnings": list(fit.warnings),
                "prior_prob": fit.model.prior_prob,
                "diagnostics": {
                    n: {"mcse": d.mcse, "relative_mcse": d.relative_mcse, "ess": d.ess, "rhat": d.rhat, "degenerate": d.degenerate}
                    for n, d in fit.diagnostics.items()
                },
            }
        )
        if fit.draws.names:
            arrays[f"model{i}"] = fit.draws.chains
    with open(os.path.join(out_dir, "fits.json"), "w", encoding="utf-8") as fh:
        json.dump({"models": manifest, "probs": result.probs.tolist()}, fh, indent=1, sort_keys=True)
    np.savez_compressed(os.path.join(out_dir, "draws.npz"), **arrays)


def load_bundle(out_dir: str):
    """Reload a saved bundle as (summary_doc, fits_doc, dataset, draws)."""
    with open(os.path.join(out_dir, "summary.json"), encoding="utf-8") as fh:
        summary_doc = json.load(fh)
    with open(os.path.join(out_dir, "fits.json"), encoding="utf-8") as fh:
        fits_doc = json.load(fh)
    with open(os.path.join(out_dir, "dataset.json"), encoding="utf-8") as fh:
        dataset = Dataset.from_json(json.load(fh))
    draws_path = os.path.join(out_dir, "draws.npz")
    draws = dict(np.load(draws_path)) if os.path.exists(draws_path) else {}
    return summary_doc, fits_doc, dataset, draws


def rebuild_fit_results(fits_doc: dict, draws: dict) -> list[tuple[str, PosteriorDraws]]:
    """Light-weight reconstruction of per-model draws from a saved bundle."""
    out = []
    for m in fits_doc["models"]:
        key = f"model{m['index']}"
        chains = draws.get(key)
        pd = PosteriorDraws(
            names=tuple(m["names"]),
            chains=chains if chains is not None else np.empty((0, 0, 0)),
        )
        out.append((m["label"], pd))
    return out
