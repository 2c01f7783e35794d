"""Desk-scale lab for spin-model energy estimators and quantum-enhanced samplers."""

__version__ = "0.1.0"
