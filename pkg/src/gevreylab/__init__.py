"""Numerical certification of the Gevrey-order construction for sums-of-squares
operators: eigenbranches, root curve, moment integrals, bracket strata and
the integer iteration bound."""

from __future__ import annotations

from .params import DEFAULT_MATRIX, ParameterError, ParameterSet, derive, parse_triple

__all__ = ["DEFAULT_MATRIX", "ParameterError", "ParameterSet", "derive", "parse_triple"]
__version__ = "0.1.0"
