"""Bayesian model selection for RC-pair equivalent circuit models."""

__all__ = ["__version__"]
__version__ = "0.1.0"
