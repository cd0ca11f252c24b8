"""Grid containers and the vector algebra everything else is built on.

A primal image and each component of a dual gradient field are plain 2-D
float64 arrays; a full gradient field is a (2, rows, cols) array whose first
axis holds the x- and y-difference components.  All reductions go through
numpy, which is deterministic for a fixed input, so certified inequalities
can be re-checked bitwise.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class ShapeMismatchError(ValueError):
    """Raised when two grids/fields that must share a shape do not."""


class Norms(NamedTuple):
    l1: float
    l2: float
    linf: float


def as_grid(data, rows: int, cols: int) -> np.ndarray:
    """Build a rows x cols grid from a flat row-major sequence."""
    a = np.asarray(data, dtype=np.float64).reshape(rows, cols)
    require_finite(a)
    return a


def as_field(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Stack two same-shape grids into a gradient field."""
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    if dx.shape != dy.shape:
        raise ShapeMismatchError(f"field components differ: {dx.shape} vs {dy.shape}")
    return np.stack([dx, dy])


def require_finite(u: np.ndarray) -> None:
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("grid contains NaN or Inf")


def _check_shapes(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape != v.shape:
        raise ShapeMismatchError(f"shape mismatch: {u.shape} vs {v.shape}")


def inner_product(u: np.ndarray, v: np.ndarray) -> float:
    """Euclidean inner product; for fields this sums over both components."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_shapes(u, v)
    return float(np.vdot(u, v))


def norms(u) -> Norms:
    """Return (l1, l2, linf) of a grid or field."""
    u = np.asarray(u, dtype=np.float64)
    if u.size == 0:
        return Norms(0.0, 0.0, 0.0)
    a = np.abs(u)
    return Norms(float(a.sum()), float(np.sqrt(np.vdot(u, u).real)), float(a.max()))


def lincomb(a: float, u: np.ndarray, b: float, v: np.ndarray) -> np.ndarray:
    """Componentwise a*u + b*v; realizes extrapolations like 2 x^n - x^{n-1}."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_shapes(u, v)
    return a * u + b * v
