"""Numerical laboratory for metastability of the stochastic sine-Gordon equation on the circle."""

__version__ = "0.1.0"

from .fields import FourierField, ModelParams  # noqa: F401
