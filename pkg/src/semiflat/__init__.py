"""Integrable-systems toolkit: affine Toda fields, flat connections, developing maps and semi-flat G2 structures."""

__version__ = "0.1.0"
