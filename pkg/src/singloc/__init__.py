"""Singular loci of 1-Lipschitz functions on planar Finsler surfaces."""

__version__ = "0.1.0"
