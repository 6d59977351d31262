"""Bayesian estimation under probabilistic linear parameter constraints."""
__version__ = "0.1.0"
