"""Small comparison helpers shared by the test modules."""

import numpy as np

from lineagelab import Field, integrate


def l1(grid, a, b) -> float:
    """Trapezoid L1 distance between two value arrays on one grid."""
    return integrate(Field(grid, np.abs(np.asarray(a) - np.asarray(b))))


def sup_rel(a, b) -> float:
    """Sup distance between a and b relative to the sup of b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def field_moments(F: Field):
    """(mass, mean, variance) of a nonnegative field."""
    mass = integrate(F)
    z = F.grid.z
    mean = integrate(Field(F.grid, z * F.values)) / mass
    var = integrate(Field(F.grid, (z - mean) ** 2 * F.values)) / mass
    return mass, mean, var


def normalized(F: Field) -> np.ndarray:
    """Values rescaled to unit trapezoid mass."""
    return F.values / integrate(F)
