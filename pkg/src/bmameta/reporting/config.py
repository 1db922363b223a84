"""Analysis configuration: JSON schema, validation, and object construction.

Defaults mirror the GUI defaults the package reproduces: all model-averaging
switches on, default prior profile, identity transform, seed 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import jsonschema

from ..data import Measure, Transform
from ..inference.mcmc import AutofitSettings, McmcSettings
from ..modelspace import BiasFamily
from ..priors import Prior, PriorProfile, custom_profile, default_profile, medicine_profile


class ConfigError(ValueError):
    """Configuration rejected; message carries a JSON-pointer-style path."""


_PRIOR_SCHEMA = {
    "type": "object",
    "properties": {
        "family": {"enum": ["point", "normal", "invgamma", "uniform", "cauchy", "gamma"]},
        "params": {"type": "array", "items": {"type": "number"}, "minItems": 1, "maxItems": 2},
        "truncation": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    },
    "required": ["family", "params"],
    "additionalProperties": False,
}

ANALYSIS_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "bmameta analysis configuration",
    "type": "object",
    "properties": {
        "data": {
            "type": "object",
            "properties": {
                "path": {"type": "string"},
                "schema": {
                    "type": "object",
                    "properties": {
                        "effect": {"type": "string"},
                        "se": {"type": "string"},
                        "label": {"type": "string"},
                        "cluster": {"type": "string"},
                        "covariates": {
                            "anyOf": [
                                {"type": "array", "items": {"type": "string"}},
                                {
                                    "type": "object",
                                    "additionalProperties": {
                                        "enum": ["continuous", "categorical", None]
                                    },
                                },
                            ]
                        },
                    },
                    "required": ["effect", "se"],
                    "additionalProperties": False,
                },
            },
            "required": ["path", "schema"],
            "additionalProperties": False,
        },
        "measure": {"enum": [m.value for m in Measure]},
        "priors": {
            "type": "object",
            "properties": {
                "source": {"enum": ["default", "medicine", "custom"]},
                "subfield": {"type": "string"},
                "scale": {"type": "number", "exclusiveMinimum": 0},
                "custom": {
                    "type": "object",
                    "properties": {
                        "effect": _PRIOR_SCHEMA,
                        "heterogeneity": _PRIOR_SCHEMA,
                        "effect_null": _PRIOR_SCHEMA,
                        "heterogeneity_null": _PRIOR_SCHEMA,
                        "coefficient_scale_fraction": {
                            "type": "number",
                            "exclusiveMinimum": 0,
                            "maximum": 1,
                        },
                    },
                    "required": ["effect", "heterogeneity"],
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
            "allOf": [
                {
                    "if": {"properties": {"source": {"const": "medicine"}}, "required": ["source"]},
                    "then": {"required": ["subfield"]},
                },
                {
                    "if": {"properties": {"source": {"const": "custom"}}, "required": ["source"]},
                    "then": {"required": ["custom"]},
                },
            ],
        },
        "model": {
            "type": "object",
            "properties": {
                "effect_bma": {"type": "boolean"},
                "heterogeneity_bma": {"type": "boolean"},
                "bias_bma": {"type": "boolean"},
                "bias_family": {"enum": [f.value for f in BiasFamily]},
                "moderators": {"type": "array", "items": {"type": "string"}},
                "moderator_bma": {"type": "boolean"},
                "multilevel": {"type": "boolean"},
            },
            "additionalProperties": False,
            "allOf": [
                {
                    "if": {"required": ["bias_family"]},
                    "then": {
                        "required": ["bias_bma"],
                        "properties": {"bias_bma": {"const": True}},
                    },
                }
            ],
        },
        "transform": {"enum": [t.value for t in Transform]},
        "mcmc": {
            "type": "object",
            "properties": {
                "chains": {"type": "integer", "minimum": 2},
                "adaptation": {"type": "integer", "minimum": 1},
                "burnin": {"type": "integer", "minimum": 1},
                "sampling": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "autofit": {
                    "anyOf": [
                        {"type": "null"},
                        {
                            "type": "object",
                            "properties": {
                                "target_ess": {"type": "number", "exclusiveMinimum": 0},
                                "max_time": {"type": "number", "minimum": 0},
                            },
                            "additionalProperties": False,
                        },
                    ]
                },
            },
            "additionalProperties": False,
        },
        "marglik_method": {"enum": ["auto", "quadrature", "bridge"]},
        "outputs": {
            "type": "object",
            "properties": {
                "conditional": {"type": "boolean"},
                "emm_terms": {"type": "array", "items": {"type": "string"}},
                "emm_test": {"type": "boolean"},
                "interval_level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "bf_direction": {"enum": ["BF10", "BF01", "LogBF10"]},
                "mixture_size": {"type": "integer", "minimum": 1000},
            },
            "additionalProperties": False,
        },
    },
    "required": ["data", "measure"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class AnalysisConfig:
    data_path: str
    data_schema: dict
    measure: Measure
    profile: PriorProfile
    effect_bma: bool = True
    heterogeneity_bma: bool = True
    bias_bma: bool = False
    bias_family: BiasFamily = BiasFamily.PSMA
    moderators: tuple[str, ...] = ()
    moderator_bma: bool = True
    multilevel: bool = False
    transform: Transform = Transform.IDENTITY
    mcmc: McmcSettings = field(default_factory=McmcSettings)
    marglik_method: str = "auto"
    conditional: bool = True
    emm_terms: tuple[str, ...] = ()
    emm_test: bool = False
    interval_level: float = 0.95
    bf_direction: str = "BF10"
    mixture_size: int = 20_000
    raw: dict = field(default_factory=dict)


def validate_config(doc: dict) -> list[str]:
    """Schema violations as JSON-pointer messages (empty list = valid)."""
    validator = jsonschema.Draft202012Validator(ANALYSIS_SCHEMA)
    errors = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: e.json_path):
        errors.append(f"{err.json_path}: {err.message}")
    return errors


def load_config(doc: dict, base_dir: str | None = None, seed_override: int | None = None) -> AnalysisConfig:
    """Validate and materialize a configuration document."""
    errors = validate_config(doc)
    if errors:
        raise ConfigError("; ".join(errors))
    import os

    measure = Measure(doc["measure"])
    priors_doc = doc.get("priors", {})
    source = priors_doc.get("source", "default")
    scale = priors_doc.get("scale", 1.0)
    if source == "default":
        profile = default_profile(measure, scale)
    elif source == "medicine":
        profile = medicine_profile(measure, priors_doc["subfield"], scale)
    else:
        c = priors_doc["custom"]
        profile = custom_profile(
            effect_alt=Prior.from_json(c["effect"]),
            heterogeneity_alt=Prior.from_json(c["heterogeneity"]),
            effect_null=Prior.from_json(c["effect_null"]) if "effect_null" in c else None,
            heterogeneity_null=Prior.from_json(c["heterogeneity_null"]) if "heterogeneity_null" in c else None,
            coefficient_scale_fraction=c.get("coefficient_scale_fraction", 0.25),
        )
        if scale != 1.0:
            profile = profile.rescaled(scale)

    model = doc.get("model", {})
    mcmc_doc = dict(doc.get("mcmc", {}))
    if seed_override is not None:
        mcmc_doc["seed"] = seed_override
    autofit_doc = mcmc_doc.pop("autofit", None)
    autofit = AutofitSettings(**autofit_doc) if autofit_doc else None
    mcmc = McmcSettings(autofit=autofit, **mcmc_doc)

    outputs = doc.get("outputs", {})
    path = doc["data"]["path"]
    if base_dir is not None and not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    return AnalysisConfig(
        data_path=path,
        data_schema=doc["data"]["schema"],
        measure=measure,
        profile=profile,
        effect_bma=model.get("effect_bma", True),
        heterogeneity_bma=model.get("heterogeneity_bma", True),
        bias_bma=model.get("bias_bma", False),
        bias_family=BiasFamily(model.get("bias_family", "PSMA")),
        moderators=tuple(model.get("moderators", ())),
        moderator_bma=model.get("moderator_bma", True),
        multilevel=model.get("multilevel", False),
        transform=Transform(doc.get("transform", "identity")),
        mcmc=mcmc,
        marglik_method=doc.get("marglik_method", "auto"),
        conditional=outputs.get("conditional", True),
        emm_terms=tuple(outputs.get("emm_terms", ())),
        emm_test=outputs.get("emm_test", False),
        interval_level=outputs.get("interval_level", 0.95),
        bf_direction=outputs.get("bf_direction", "BF10"),
        mixture_size=outputs.get("mixture_size", 20_000),
        raw=doc,
    )


def load_config_file(path: str, seed_override: int | None = None) -> AnalysisConfig:
    import os

    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return load_config(doc, base_dir=os.path.dirname(os.path.abspath(path)), seed_override=seed_override)
