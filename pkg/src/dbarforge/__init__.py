"""Numerical construction of holomorphic frames for matrix-valued (0,1)-forms on balls."""

__version__ = "0.1.0"
