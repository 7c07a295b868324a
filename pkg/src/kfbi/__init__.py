"""Kernel-free boundary integral solvers for elliptic problems on parameterized surfaces."""

__version__ = "0.1.0"
