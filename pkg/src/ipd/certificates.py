"""Numerical verification of the convergence machinery.

Error-sum accumulators, theorem right-hand-side bounds, the per-iteration
descent inequality, the recursion bound used in the proofs, and slope
fitting for measured convergence curves.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ipd.core import inner_product
from ipd.solvers import SaddleProblem, StepState, vdist

_ACCEL_TYPES = (1, 2, 3)


@dataclass
class SaddleReference:
    """Numerical ground truth: saddle pair, optimal energy, accuracy proxy."""

    x_star: np.ndarray
    y_star: object
    F_star: float
    provenance: str = ""
    est_accuracy: float = 0.0


@dataclass
class CertificateAccumulator:
    """Running error sums A_N, B_N and the ergodic weight total T_N.

    Contributions are variant- and approximation-type-specific; the achieved
    precisions (never the targets) must be fed in so every certified
    inequality stays sound.
    """

    variant: str
    approx_type: int = 2
    tau0: float = 1.0
    sigma0: float = 1.0
    A: float = 0.0
    B: float = 0.0
    T: float = 0.0
    N: int = 0
    last_tau: float = field(default=0.0)
    last_sigma: float = field(default=0.0)
    theta: float = 1.0  # constant contraction factor (smooth variant)
    history: list = field(default_factory=list)
    _smooth_weight: float = 1.0

    def __post_init__(self):
        if self.approx_type not in _ACCEL_TYPES:
            raise ValueError("approx_type must be 1, 2 or 3")
        if self.variant not in (
            "basic",
            "reduced",
            "primal_accel",
            "dual_accel",
            "smooth",
        ):
            raise ValueError(f"no certificate table for variant {self.variant!r}")
        self.last_tau = self.tau0
        self.last_sigma = self.sigma0

    def add(
        self,
        n: int,
        step: StepState,
        eps_n: float,
        delta_n: float,
        grad_err_norm: float = 0.0,
    ) -> "CertificateAccumulator":
        if n != self.N + 1:
            raise ValueError("contributions must arrive with consecutive n")
        tau, sigma = step.tau, step.sigma
        i = self.approx_type
        root_term = math.sqrt(2.0 * tau * eps_n) if i in (1, 3) else 0.0
        eps_part = eps_n + delta_n if i in (1, 2) else delta_n

        if self.variant == "basic":
            dA = tau * grad_err_norm + root_term
            dB = tau * eps_part
            dT = 1.0
        elif self.variant == "reduced":
            dA = 0.0
            dB = eps_n + delta_n
            dT = 1.0
        elif self.variant == "primal_accel":
            dA = sigma * grad_err_norm + (
                math.sqrt(2.0 * sigma * sigma * eps_n / tau) if i in (1, 3) else 0.0
            )
            dB = 2.0 * sigma * eps_part
            dT = sigma / self.sigma0
        elif self.variant == "dual_accel":
            dA = root_term
            dB = 2.0 * tau * eps_part
            dT = tau / self.tau0
        else:  # smooth
            w = self._smooth_weight
            dA = w * (tau * grad_err_norm + root_term)
            dB = w * tau * eps_part
            dT = w
            self.theta = step.theta
            self._smooth_weight = w / step.theta

        self.A += dA
        self.B += dB
        self.T += dT
        self.N = n
        self.last_tau = tau
        self.last_sigma = sigma
        self.history.append((n, dA, dB, dT))
        return self

    def rhs(self, dist_x0: float, dist_y0: float) -> float:
        return theorem_rhs(self, dist_x0, dist_y0)


def theorem_rhs(
    acc: CertificateAccumulator, dist_x0: float, dist_y0: float
) -> float:
    """Upper bound on the ergodic Lagrangian gap at the accumulator's N.

    For the accelerated variants the latest seen step ratio stands in for
    the N-th one; the bound is monotone in that ratio, so it stays valid.
    """
    if acc.N == 0:
        return math.inf
    t0, s0 = acc.tau0, acc.sigma0
    A, B, T = acc.A, acc.B, acc.T
    if acc.variant == "basic":
        base = dist_x0 + math.sqrt(t0 / s0) * dist_y0 + 2.0 * A + math.sqrt(2.0 * B)
        return base * base / (2.0 * t0 * T)
    if acc.variant == "reduced":
        return (
            dist_x0**2 / (2.0 * t0) + dist_y0**2 / (2.0 * s0) + B
        ) / T
    if acc.variant == "primal_accel":
        ratio = math.sqrt(acc.last_tau / acc.last_sigma)
        base = (
            math.sqrt(s0 / t0) * dist_x0
            + dist_y0
            + math.sqrt(2.0 * B)
            + 2.0 * ratio * A
        )
        return base * base / (2.0 * s0 * T)
    if acc.variant == "dual_accel":
        base = (
            dist_x0
            + math.sqrt(t0 / s0) * dist_y0
            + math.sqrt(2.0 * B)
            + 2.0 * A
        )
        return base * base / (2.0 * t0 * T)
    # smooth
    theta = acc.theta
    base = (
        dist_x0
        + math.sqrt(t0 / s0) * dist_y0
        + 2.0 * theta ** (acc.N / 2.0) * A
        + math.sqrt(2.0 * B)
    )
    return base * base / (2.0 * t0 * T)


def lagrangian_gap(
    problem: SaddleProblem, x: np.ndarray, y, ref: SaddleReference
) -> float:
    """L(x, y_star) - L(x_star, y); +inf when y is dual-infeasible."""
    lx = problem.lagrangian(x, ref.y_star)
    ly = problem.lagrangian(ref.x_star, y)
    if math.isinf(ly):
        return math.inf
    return lx - ly


def descent_inequality_check(
    problem: SaddleProblem,
    iterate_pack,
    step,
    errors,
    probe,
    rel_tol: float = 1e-8,
):
    """Evaluate both sides of the one-step descent inequality.

    iterate_pack = (x_bar, y_bar, x_tilde, y_tilde, x_check, y_check) where
    (x_check, y_check) came from one inexact update with steps (tau, sigma)
    and certified errors (e_norm, eps, delta); probe = (x, y).  Returns
    (lhs, rhs, holds).
    """
    x_bar, y_bar, x_tilde, y_tilde, x_check, y_check = iterate_pack
    tau, sigma = step
    e_norm, eps, delta = errors
    x, y = probe

    lhs = problem.lagrangian(x_check, y) - problem.lagrangian(x, y_check)

    def sq(u, v):
        d = u - v
        return inner_product(d, d)

    K = problem.K
    rhs = (
        sq(x, x_bar) / (2.0 * tau)
        + sq(y, y_bar) / (2.0 * sigma)
        - sq(x, x_check) / (2.0 * tau)
        - (1.0 - tau * problem.L_f) / (2.0 * tau) * sq(x_bar, x_check)
        - sq(y, y_check) / (2.0 * sigma)
        - sq(y_bar, y_check) / (2.0 * sigma)
        + inner_product(K.apply(x - x_check), y_tilde - y_check)
        - inner_product(K.apply(x_tilde - x_check), y - y_check)
        + (e_norm + math.sqrt(2.0 * eps / tau)) * math.sqrt(sq(x, x_check))
        + eps
        + delta
    )
    holds = lhs <= rhs + rel_tol * max(1.0, abs(rhs))
    return lhs, rhs, holds


def recursion_bound(S: Sequence[float], lambdas: Sequence[float]) -> np.ndarray:
    """Bound u_N <= sum(lam)/2 + sqrt(S_N + (sum(lam)/2)^2) for a sequence
    obeying u_N^2 <= S_N + sum_n lam_n u_n."""
    S = np.asarray(S, dtype=np.float64)
    lam = np.asarray(lambdas, dtype=np.float64)
    if S.shape != lam.shape:
        raise ValueError("S and lambdas must have equal length")
    if np.any(np.diff(S) < 0):
        raise ValueError("S must be nondecreasing")
    if np.any(lam < 0):
        raise ValueError("lambdas must be nonnegative")
    half = 0.5 * np.cumsum(lam)
    return half + np.sqrt(S + half * half)


def fit_loglog_slope(
    ns,
    values=None,
    n_range: Optional[tuple] = None,
    semilog: bool = False,
    ref: Optional[SaddleReference] = None,
):
    """Least-squares slope of log(value) against log(n) (or n in semilog
    mode).  Nonpositive values are excluded with a warning; fewer than five
    usable points is an error.  Returns (slope, r2).

    Accepts either explicit (ns, values) arrays, or a RunRecord plus a
    metric name (relative-error metrics additionally need ref).
    """
    if hasattr(ns, "entries"):
        ns, values = record_metric(ns, values, ref)
    ns = np.asarray(ns, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    mask = np.ones(ns.shape, dtype=bool)
    if n_range is not None:
        lo, hi = n_range
        mask &= (ns >= lo) & (ns <= hi)
    bad = values <= 0
    if np.any(bad & mask):
        warnings.warn(
            f"excluded {int(np.count_nonzero(bad & mask))} nonpositive values "
            "from the slope fit"
        )
    mask &= ~bad
    if np.count_nonzero(mask) < 5:
        raise ValueError("need at least 5 positive points to fit a slope")
    t = ns[mask] if semilog else np.log(ns[mask])
    v = np.log(values[mask])
    slope, intercept = np.polyfit(t, v, 1)
    pred = slope * t + intercept
    ss_res = float(np.sum((v - pred) ** 2))
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(r2)


def record_metric(record, metric: str, ref: Optional[SaddleReference] = None):
    """Extract (ns, values) for a named metric from a RunRecord.

    Relative-error metrics need a reference with F_star.
    """
    ns = np.array([e.n for e in record.entries], dtype=np.float64)
    if metric in ("rel_err", "erg_rel_err"):
        if ref is None:
            raise ValueError("relative-error metrics need a SaddleReference")
        attr = "primal_energy" if metric == "rel_err" else "ergodic_primal_energy"
        F = np.array([getattr(e, attr) for e in record.entries])
        scale = abs(ref.F_star) if ref.F_star != 0 else 1.0
        vals = (F - ref.F_star) / scale
    else:
        vals = np.array([getattr(e, metric) for e in record.entries])
    return ns, vals
