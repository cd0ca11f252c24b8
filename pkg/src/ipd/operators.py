"""Linear operators of the deblurring experiments.

Discrete gradient / divergence (the exactly adjoint TV pair), separable
periodic Gaussian blur, identity, and vertical stacking, all behind one
handle carrying forward, adjoint, and a certified norm bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import convolve1d

from ipd.core import inner_product

# safety factor applied to power-iteration estimates so strict step-size
# conditions hold for the true operator norm
NORM_SAFETY = 1.001


def apply_gradient(u: np.ndarray) -> np.ndarray:
    """Forward differences with Neumann boundary (last difference zero)."""
    g = np.zeros((2,) + u.shape)
    g[0, :, :-1] = u[:, 1:] - u[:, :-1]
    g[1, :-1, :] = u[1:, :] - u[:-1, :]
    return g


def apply_divergence(p: np.ndarray) -> np.ndarray:
    """Negative adjoint of apply_gradient: <grad u, p> = -<u, div p> exactly."""
    dx, dy = p[0], p[1]
    out = np.zeros(dx.shape)
    # the last column of dx / last row of dy never enter: grad zeroes them
    if dx.shape[1] > 1:
        out[:, 0] += dx[:, 0]
        out[:, 1:-1] += dx[:, 1:-1] - dx[:, :-2]
        out[:, -1] += -dx[:, -2]
    if dy.shape[0] > 1:
        out[0, :] += dy[0, :]
        out[1:-1, :] += dy[1:-1, :] - dy[:-2, :]
        out[-1, :] += -dy[-2, :]
    return out


@dataclass
class LinearOperatorHandle:
    """A bounded linear map with forward, adjoint, and norm bound."""

    apply: Callable[[np.ndarray], np.ndarray]
    adjoint_apply: Callable[[np.ndarray], np.ndarray]
    input_shape: tuple
    output_shape: tuple
    norm_bound: float = math.inf


class GradientOperator(LinearOperatorHandle):
    """The discrete gradient as an operator handle; ||grad||^2 <= 8."""

    def __init__(self, shape: tuple[int, int]):
        super().__init__(
            apply=apply_gradient,
            adjoint_apply=lambda p: -apply_divergence(p),
            input_shape=shape,
            output_shape=(2,) + tuple(shape),
            norm_bound=math.sqrt(8.0),
        )


class IdentityOperator(LinearOperatorHandle):
    def __init__(self, shape: tuple[int, int]):
        super().__init__(
            apply=lambda u: u.copy(),
            adjoint_apply=lambda u: u.copy(),
            input_shape=shape,
            output_shape=shape,
            norm_bound=1.0,
        )


def gaussian_kernel(fwhm_pixels: float) -> np.ndarray:
    """Normalized 1-D Gaussian with sigma = fwhm / (2 sqrt(2 ln 2)),
    truncated at radius ceil(3 sigma)."""
    if fwhm_pixels <= 0:
        raise ValueError("fwhm must be positive")
    sigma = fwhm_pixels / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    radius = int(math.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


class GaussianBlurOperator(LinearOperatorHandle):
    """Separable periodic Gaussian blur; even kernel + wrap boundary makes
    the operator exactly self-adjoint with unit norm."""

    def __init__(self, fwhm_pixels: float, shape: tuple[int, int]):
        self.kernel = gaussian_kernel(fwhm_pixels)
        self.fwhm = float(fwhm_pixels)

        def blur(u: np.ndarray) -> np.ndarray:
            out = convolve1d(u, self.kernel, axis=0, mode="wrap")
            return convolve1d(out, self.kernel, axis=1, mode="wrap")

        super().__init__(
            apply=blur,
            adjoint_apply=blur,
            input_shape=shape,
            output_shape=shape,
            norm_bound=1.0,
        )


def gaussian_blur_operator(
    fwhm_pixels: float, shape: tuple[int, int]
) -> GaussianBlurOperator:
    """Function-style constructor for the separable periodic Gaussian blur."""
    return GaussianBlurOperator(fwhm_pixels, shape)


@dataclass
class StackedOperator(LinearOperatorHandle):
    """Vertical stack of operators sharing one input space.

    Forward maps a grid to the list of part outputs; the adjoint of the
    stack is the sum of the part adjoints.
    """

    parts: Sequence[LinearOperatorHandle] = field(default_factory=list)

    def __init__(self, parts: Sequence[LinearOperatorHandle]):
        if not parts:
            raise ValueError("stack needs at least one part")
        shape = parts[0].input_shape
        for p in parts:
            if tuple(p.input_shape) != tuple(shape):
                raise ValueError("stacked parts must share the input space")
        self.parts = list(parts)
        super().__init__(
            apply=lambda u: [p.apply(u) for p in self.parts],
            adjoint_apply=lambda ys: sum(
                p.adjoint_apply(y) for p, y in zip(self.parts, ys)
            ),
            input_shape=shape,
            output_shape=tuple(p.output_shape for p in parts),
            norm_bound=math.inf,
        )


def _stack_inner(a, b) -> float:
    if isinstance(a, list):
        return sum(inner_product(x, y) for x, y in zip(a, b))
    return inner_product(a, b)


def _stack_norm(a) -> float:
    return math.sqrt(_stack_inner(a, a))


def estimate_operator_norm(
    op: LinearOperatorHandle,
    max_iters: int = 200,
    tol: float = 1e-10,
    seed: int = 0,
) -> float:
    """Power iteration on K*K from a seeded random start.

    Returns the norm estimate and stores NORM_SAFETY * estimate in
    op.norm_bound.  Deterministic for a fixed seed; a zero operator
    returns 0.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.input_shape)
    nx = _stack_norm(x)
    if nx == 0.0:
        return 0.0
    x = x / nx
    est = 0.0
    for _ in range(max_iters):
        y = op.apply(x)
        x = op.adjoint_apply(y)
        val = _stack_norm(x)
        if val == 0.0:
            op.norm_bound = 0.0
            return 0.0
        new_est = math.sqrt(val)
        x = x / val
        if abs(new_est - est) <= tol * max(1.0, est):
            est = new_est
            break
        est = new_est
    op.norm_bound = NORM_SAFETY * est
    return est
