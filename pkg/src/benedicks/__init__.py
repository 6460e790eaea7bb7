"""Killed Brownian motion in Benedicks domains: Monte Carlo, finite differences, asymptotics."""

__version__ = "0.1.0"
