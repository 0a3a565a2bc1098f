"""Numerical verification of curvature structure on Riemannian 3-manifolds."""

__version__ = "0.1.0"
