"""Batch experiment harness: configuration, runners, CSV/SVG emission, CLI."""

from .config import ExperimentConfig, build_config
from .runners import RUNNERS

__all__ = ["ExperimentConfig", "build_config", "RUNNERS"]
