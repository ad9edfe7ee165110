"""Config-driven experiment harness: CSV tables, SVG figures and run manifests."""

from .experiments import EXPERIMENTS, PAPER_MAP, run_experiment

__all__ = ["EXPERIMENTS", "PAPER_MAP", "run_experiment"]
