"""Numerical solver and well-posedness harness for layered combustion fronts."""

__version__ = "0.1.0"
