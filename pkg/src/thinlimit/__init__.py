"""Thin-domain Neumann problems for fully nonlinear operators and their 1D limits."""

__version__ = "0.1.0"
