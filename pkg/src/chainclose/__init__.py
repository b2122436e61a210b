"""Numerical chain closing for partially hyperbolic skew products on T^3."""
