"""Delay-induced uncertainty diagnostics for kicked oscillators."""

__version__ = "0.1.0"
