"""Numerical laboratory for constraint maps, scalar obstacle problems and their free boundaries."""

from .errors import CmapError
from .fields import Grid, ScalarField, VectorField
from .geometry import TargetManifold

__all__ = ["CmapError", "Grid", "ScalarField", "VectorField", "TargetManifold"]
__version__ = "0.1.0"
