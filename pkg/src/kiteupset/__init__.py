"""Rare upset generation, prediction and loss ranking for pumping-cycle kite simulations."""

__version__ = "0.1.0"
