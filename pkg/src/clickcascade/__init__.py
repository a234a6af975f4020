"""Headline click models, Bayesian A/B testing and spreading simulations."""

__version__ = "0.1.0"
