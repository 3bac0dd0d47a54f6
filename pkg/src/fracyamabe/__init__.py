"""Spectral lab for the fractional Yamabe flow on flat tori and round spheres."""

from .errors import FracYamabeError
from .geometry import Geometry, SpectralField, integrate, make_sphere, make_torus, to_coeffs, to_grid

__all__ = ["FracYamabeError", "Geometry", "SpectralField", "integrate", "make_sphere",
           "make_torus", "to_coeffs", "to_grid"]
__version__ = "0.1.0"
