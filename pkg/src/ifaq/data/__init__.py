"""Synthetic retail data and CSV input/output."""

from .csvio import CSVError, export_csv, load_csv
from .retail import GenSpec, GenerationError, SplitMix64, generate_retail, retail_schema

__all__ = [
    "CSVError", "GenSpec", "GenerationError", "SplitMix64", "export_csv", "generate_retail",
    "load_csv", "retail_schema",
]
