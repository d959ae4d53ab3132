"""Distributed hypothesis testing with min-rule belief propagation and its
Byzantine-resilient variant, plus linear / log-linear pooling baselines."""

__version__ = "0.1.0"
