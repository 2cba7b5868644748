"""Synthesis, rate tuning and exact stochastic analysis of bimolecular CRNs."""

__version__ = "0.1.0"
