"""Datasets, experiment orchestration, SVG plotting and the command-line interface."""

from .datasets import Dataset, binarize, glyph_images, load_idx, write_idx
from .experiment import ExperimentGrid, ResultRow, run_experiment, run_transfer
from .plot import plot

__all__ = ["Dataset", "binarize", "glyph_images", "load_idx", "write_idx", "ExperimentGrid", "ResultRow",
           "run_experiment", "run_transfer", "plot"]
