"""Forecasting with ensembles of random networks and network autoregressions."""

__version__ = "0.1.0"
