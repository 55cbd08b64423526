"""Adaptive momentum-space solver for the relativistic electron kinetic equation."""

__version__ = "0.1.0"
