"""Discrete harmonic analysis on compact and bordered Riemann surfaces."""

__version__ = "0.1.0"
