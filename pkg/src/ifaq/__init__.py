"""Optimizing compiler and execution engine for a functional language of
aggregates over relational data."""

__version__ = "0.1.0"
