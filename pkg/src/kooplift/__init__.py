"""Koopman eigenfunction lifting, lifted linear system identification, and
condensed model predictive control."""

__version__ = "0.1.0"
