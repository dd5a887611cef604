"""Stochastic dynamic programming for a wind-powered green hydrogen plant."""

__version__ = "0.1.0"
