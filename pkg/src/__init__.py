"""Bose-Hubbard dimer self-trapping: exact, mean-field and heuristic engines."""

__version__ = "0.1.0"
