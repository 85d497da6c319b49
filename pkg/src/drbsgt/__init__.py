"""Distributed randomized block stochastic gradient tracking over simulated agent networks."""

__version__ = "0.1.0"
