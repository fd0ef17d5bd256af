"""Eigenstate-thermalization numerics for the quarter-stadium billiard."""

from .geometry import BilliardGeometry, BoxGeometry
from .numerics import QuadratureError, QuadratureSpec, bessel_j0, bessel_j0_asymptotic
from .semiclassics import FFunctionModel, PhysicsParams

__version__ = "0.1.0"

__all__ = ["BilliardGeometry", "BoxGeometry", "QuadratureError", "QuadratureSpec",
           "bessel_j0", "bessel_j0_asymptotic", "FFunctionModel", "PhysicsParams"]
