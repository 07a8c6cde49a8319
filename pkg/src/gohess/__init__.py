"""Unbiased low-variance Monte Carlo derivative estimators for stochastic
graphs with gamma and negative-binomial nodes, plus a stochastic
cubic-regularization optimizer built on them."""

__version__ = "0.1.0"
