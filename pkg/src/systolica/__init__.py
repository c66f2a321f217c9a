"""Systoles and systolic ratios of flat and singular non-orientable 3-manifolds."""

__version__ = "0.1.0"
