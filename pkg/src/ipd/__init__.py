"""Inexact primal-dual saddle-point solvers with verifiable error certificates.

Solves min_x max_y <Kx,y> + f(x) + g(x) - h*(y) where the proximal map of g
(and possibly the gradient of f) is only computed approximately, tracks
per-iteration precision certificates, and checks the resulting convergence
bounds numerically.  Ships a CLI (``ipd``) reproducing TV-L1 / TV-L2
deblurring experiments with convergence-rate verification.
"""

from ipd.core import inner_product, lincomb, norms
from ipd.operators import (
    GaussianBlurOperator,
    GradientOperator,
    IdentityOperator,
    LinearOperatorHandle,
    StackedOperator,
    apply_divergence,
    apply_gradient,
    estimate_operator_norm,
)
from ipd.prox import (
    ProxCertificate,
    TVProxSubproblem,
    duality_gap,
    solve_tv_prox,
)
from ipd.solvers import ErrorSchedule, RunRecord, SaddleProblem, StepState

__all__ = [
    "ErrorSchedule",
    "GaussianBlurOperator",
    "GradientOperator",
    "IdentityOperator",
    "LinearOperatorHandle",
    "ProxCertificate",
    "RunRecord",
    "SaddleProblem",
    "StackedOperator",
    "StepState",
    "TVProxSubproblem",
    "apply_divergence",
    "apply_gradient",
    "duality_gap",
    "estimate_operator_norm",
    "inner_product",
    "lincomb",
    "norms",
    "solve_tv_prox",
]

__version__ = "0.1.0"
