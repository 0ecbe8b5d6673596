"""Blow-up approximate solutions for the critical Neumann problem in dimensions 4 and 6."""

__version__ = "0.1.0"
