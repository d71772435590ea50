"""Online H-step-ahead prediction for unknown linear stochastic systems."""

__version__ = "0.1.0"
