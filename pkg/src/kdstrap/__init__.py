"""Numerical toolkit for trapping, horizons and radial points of subextremal Kerr-de Sitter spacetimes."""

from .errors import DomainError, KdsError, NotSubextremal
from .radial import SpacetimeParams, horizon_data, lambda_interval

__version__ = "0.1.0"

__all__ = ["SpacetimeParams", "horizon_data", "lambda_interval", "KdsError", "DomainError",
           "NotSubextremal", "__version__"]
