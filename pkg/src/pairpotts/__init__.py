"""Constrained primal/dual Potts pairs: exact oracle, samplers, special cases."""

__version__ = "0.1.0"
