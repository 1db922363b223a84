"""Reporting: text tables, SVG figures, configuration, and the CLI."""

from .analysis import AnalysisResult, load_bundle, run_analysis, save_bundle
from .config import ANALYSIS_SCHEMA, AnalysisConfig, ConfigError, load_config, load_config_file, validate_config
from .plots import PlotSpec
from .tables import render_tables

__all__ = [
    "ANALYSIS_SCHEMA",
    "AnalysisConfig",
    "AnalysisResult",
    "ConfigError",
    "PlotSpec",
    "load_bundle",
    "load_config",
    "load_config_file",
    "render_tables",
    "run_analysis",
    "save_bundle",
    "validate_config",
]
