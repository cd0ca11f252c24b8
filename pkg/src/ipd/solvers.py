"""The inexact primal-dual algorithm variants and the exact baselines.

One generic dual-then-primal loop drives all variants; they differ in the
extrapolation, the step-size schedule, and the ergodic weights.  The dual
variable may be a single array (two-operator splittings) or a list of
arrays (full-dualization baselines on a stacked operator).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from ipd.core import inner_product
from ipd.prox import ProxCertificate, TVProxSubproblem, solve_tv_prox

VARIANTS = (
    "basic",
    "reduced",
    "primal_accel",
    "dual_accel",
    "smooth",
    "exact_pdhg",
    "exact_pdhg_accel",
)

# variants whose dual update extrapolates with x^n + theta (x^n - x^{n-1});
# the rest use the fixed overrelaxation 2 x^n - x^{n-1}
_THETA_EXTRAPOLATED = ("primal_accel", "dual_accel", "smooth", "exact_pdhg_accel")

_STEP_TOL = 1e-12


class StepConditionError(ValueError):
    """A variant's theorem precondition on the step sizes is violated."""


@dataclass(frozen=True)
class StepState:
    tau: float
    sigma: float
    theta: float
    beta: float
    variant: str

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.tau <= 0 or self.sigma <= 0:
            raise ValueError("tau and sigma must be positive")


def validate_step_state(
    state: StepState, L: float, L_f: float, gamma: float, mu: float
) -> None:
    """Check the variant's theorem precondition; raise on violation."""
    t, s, th, b = state.tau, state.sigma, state.theta, state.beta
    v = state.variant
    if v == "basic":
        if t * L_f + s * t * L * L + t * b * L >= 1.0:
            raise StepConditionError(
                f"basic: tau L_f + sigma tau L^2 + tau beta L = "
                f"{t * L_f + s * t * L * L + t * b * L:.6g} >= 1"
            )
    elif v in ("reduced", "exact_pdhg"):
        if t * s * L * L >= 1.0:
            raise StepConditionError(f"{v}: tau sigma L^2 = {t * s * L * L:.6g} >= 1")
    elif v in ("primal_accel", "exact_pdhg_accel"):
        if gamma <= 0:
            raise StepConditionError(f"{v} requires a positive primal modulus")
        if t * L_f + t * s * L * L > 1.0 + _STEP_TOL:
            raise StepConditionError(
                f"{v}: tau L_f + tau sigma L^2 = {t * L_f + t * s * L * L:.6g} > 1"
            )
    elif v == "dual_accel":
        if mu <= 0:
            raise StepConditionError("dual_accel requires a positive dual modulus")
        if t * s * th * th * L * L > 1.0 + _STEP_TOL:
            raise StepConditionError(
                f"dual_accel: tau sigma theta^2 L^2 = "
                f"{t * s * th * th * L * L:.6g} > 1"
            )
    elif v == "smooth":
        if gamma <= 0 or mu <= 0:
            raise StepConditionError("smooth requires positive moduli on both sides")
        if abs((1.0 + gamma * t) * th - 1.0) > 1e-9 or abs(
            (1.0 + mu * s) * th - 1.0
        ) > 1e-9:
            raise StepConditionError("smooth: 1+gamma tau = 1+mu sigma = 1/theta fails")
        if t * L_f + t * s * th * th * L * L > 1.0 + 1e-9:
            raise StepConditionError("smooth: tau L_f + tau sigma theta^2 L^2 > 1")


def update_steps(state: StepState, gamma: float, mu: float) -> StepState:
    """One step-size update; constant-step variants return the input."""
    v = state.variant
    if v in ("basic", "reduced", "smooth", "exact_pdhg"):
        return state
    if v in ("primal_accel", "exact_pdhg_accel"):
        if gamma <= 0:
            raise StepConditionError("primal acceleration needs gamma > 0")
        theta = 1.0 / math.sqrt(1.0 + gamma * state.tau)
        return replace(
            state, tau=theta * state.tau, sigma=state.sigma / theta, theta=theta
        )
    if v == "dual_accel":
        if mu <= 0:
            raise StepConditionError("dual acceleration needs mu > 0")
        theta = 1.0 / math.sqrt(1.0 + 2.0 * mu * state.sigma)
        return replace(
            state, sigma=theta * state.sigma, tau=state.tau / theta, theta=theta
        )
    raise ValueError(f"unknown variant {v!r}")


def smooth_step_solve(
    gamma: float, mu: float, L: float, L_f: float = 0.0
) -> StepState:
    """Closed-form constant steps for the doubly strongly convex regime,
    satisfying 1 + gamma tau = 1 + mu sigma = 1/theta and
    tau L_f + tau sigma theta^2 L^2 <= 1."""
    if gamma <= 0 or mu <= 0 or L <= 0 or L_f < 0:
        raise ValueError("need gamma, mu, L > 0 and L_f >= 0")
    r = L_f / gamma
    root = math.sqrt(1.0 + 4.0 * L * L / (gamma * mu) + r * r + 2.0 * r)
    tau = (1.0 + root - r) / (2.0 * L_f + 2.0 * L * L / mu)
    sigma = (1.0 + root - r) / (2.0 * L_f * mu / gamma + 2.0 * L * L / gamma)
    theta = 1.0 - (root - r - 1.0) / (2.0 * L * L / (gamma * mu))
    state = StepState(tau=tau, sigma=sigma, theta=theta, beta=0.0, variant="smooth")
    assert abs((1.0 + gamma * tau) * theta - 1.0) <= 1e-12 * max(1.0, 1.0 / theta)
    assert abs((1.0 + mu * sigma) * theta - 1.0) <= 1e-12 * max(1.0, 1.0 / theta)
    assert tau * L_f + tau * sigma * theta * theta * L * L <= 1.0 + 1e-12
    return state


@dataclass(frozen=True)
class ErrorSchedule:
    """Decay law for an injected error sequence.

    kind 'zero' -> 0; 'polynomial' -> C n^{-alpha}; 'geometric' -> C q^n.
    role names what the schedule drives: 'primal_eps', 'dual_delta' or
    'gradient_norm'.
    """

    kind: str = "zero"
    C: float = 0.0
    alpha: float = 1.0
    q: float = 0.9
    role: str = "primal_eps"

    def __post_init__(self):
        if self.kind not in ("zero", "polynomial", "geometric"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.C < 0:
            raise ValueError("C must be nonnegative")
        if self.kind == "polynomial" and self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.kind == "geometric" and not (0.0 < self.q < 1.0):
            raise ValueError("q must be in (0, 1)")

    def __call__(self, n: int) -> float:
        if self.kind == "zero" or self.C == 0.0:
            return 0.0
        if self.kind == "polynomial":
            return self.C * float(n) ** (-self.alpha)
        return self.C * self.q**n


def make_gradient_error(
    n: int, schedule: ErrorSchedule, shape: tuple, seed: int
) -> np.ndarray:
    """Seeded random direction scaled to the exact scheduled norm."""
    if schedule.role != "gradient_norm":
        raise ValueError("schedule role must be 'gradient_norm'")
    target = schedule(n)
    if target == 0.0:
        return np.zeros(shape)
    rng = np.random.default_rng([seed, n])
    e = rng.uniform(-1.0, 1.0, size=shape)
    nrm = math.sqrt(inner_product(e, e))
    if nrm == 0.0:  # pragma: no cover - measure-zero draw
        e = np.ones(shape)
        nrm = math.sqrt(e.size)
    return e * (target / nrm)


class TVProxOracle:
    """Inexact prox of lam ||grad . ||_1 through the dual inner solver."""

    def __init__(self, lam: float):
        self.lam = lam

    def solve(self, anchor, tau, eps_target, warm_z, max_inner, step_scale):
        sub = TVProxSubproblem(anchor=anchor, tau=tau, lam=self.lam)
        return solve_tv_prox(
            sub, eps_target, warm_z=warm_z, max_inner=max_inner,
            step_scale=step_scale,
        )


class ExactProxOracle:
    """Closed-form prox wrapped in the oracle interface (always type 'exact')."""

    def __init__(self, prox: Callable[[np.ndarray, float], np.ndarray]):
        self._prox = prox

    def solve(self, anchor, tau, eps_target, warm_z, max_inner, step_scale):
        return self._prox(anchor, tau), None, ProxCertificate.exact()


@dataclass
class SaddleProblem:
    """A saddle-point problem <Kx,y> + f(x) + g(x) - h*(y) with its oracles.

    dual_prox must be exact; the primal prox oracle may be inexact.  gamma
    and mu are the strong-convexity moduli that enable acceleration; the
    Lagrangian may return +inf for a dual-infeasible y.
    """

    K: object  # LinearOperatorHandle
    primal_oracle: object
    dual_prox: Callable
    primal_energy: Callable[[np.ndarray], float]
    lagrangian: Callable
    grad_f: Optional[Callable[[np.ndarray], np.ndarray]] = None
    L_f: float = 0.0
    gamma: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if self.grad_f is None:
            self.L_f = 0.0

    @property
    def L(self) -> float:
        return self.K.norm_bound


@dataclass
class RunEntry:
    n: int
    tau: float
    sigma: float
    theta: float
    primal_energy: float
    ergodic_primal_energy: float
    lag_gap: float  # ergodic Lagrangian gap vs the saddle reference (nan if none)
    eps_target: float
    eps_achieved: float
    delta_achieved: float
    grad_error_norm: float
    inner_iterations: int
    cumulative_inner_iterations: int
    rhs_bound: float  # theorem bound at this N (nan if not tracked)


@dataclass
class RunRecord:
    """Append-only per-iteration log of one solver run."""

    variant: str
    metadata: dict = field(default_factory=dict)
    entries: List[RunEntry] = field(default_factory=list)
    final_x: Optional[np.ndarray] = None
    final_y: object = None
    ergodic_x: Optional[np.ndarray] = None
    ergodic_y: object = None

    def append(self, entry: RunEntry) -> None:
        if self.entries and entry.n != self.entries[-1].n + 1:
            raise ValueError("entries must be appended with consecutive n")
        if self.entries and entry.cumulative_inner_iterations < self.entries[
            -1
        ].cumulative_inner_iterations:
            raise ValueError("cumulative inner iterations must be nondecreasing")
        self.entries.append(entry)


# --- small helpers treating the dual variable as array-or-list ---------------


def vlin(a: float, u, b: float, v):
    if isinstance(u, list):
        return [a * ui + b * vi for ui, vi in zip(u, v)]
    return a * u + b * v


def vscale(a: float, u):
    if isinstance(u, list):
        return [a * ui for ui in u]
    return a * u


def vcopy(u):
    if isinstance(u, list):
        return [ui.copy() for ui in u]
    return u.copy()


def vnorm(u) -> float:
    if isinstance(u, list):
        return math.sqrt(sum(inner_product(ui, ui) for ui in u))
    return math.sqrt(inner_product(u, u))


def vdist(u, v) -> float:
    return vnorm(vlin(1.0, u, -1.0, v))


def ergodic_update(accumulator, x_n, y_n, weight_n: float):
    """Fold one iterate into running weighted sums.

    accumulator is (sum_x, sum_y, T) or None to start; returns the updated
    triple.  The weighted mean is sum / T.
    """
    if weight_n <= 0:
        raise ValueError("weight must be positive")
    if accumulator is None:
        return (vscale(weight_n, x_n), vscale(weight_n, y_n), weight_n)
    sx, sy, t = accumulator
    return (
        vlin(1.0, sx, weight_n, x_n),
        vlin(1.0, sy, weight_n, y_n),
        t + weight_n,
    )


def ergodic_mean(accumulator):
    sx, sy, t = accumulator
    return vscale(1.0 / t, sx), vscale(1.0 / t, sy)


def run_inexact_pd(
    problem: SaddleProblem,
    variant: str,
    state0: StepState,
    schedules: Sequence[ErrorSchedule],
    N: int,
    x0: np.ndarray,
    y0,
    mode: str = "practical",
    seed: int = 0,
    max_inner: int = 500,
    ref=None,
    bound_tracker=None,
    observer: Optional[Callable] = None,
) -> RunRecord:
    """Run N outer iterations of an inexact primal-dual variant.

    Each iteration performs the dual update with the extrapolated primal
    point and then the inexact primal prox.  mode='practical' warm-starts
    the inner solver with step_scale 0.99; mode='worst_case' cold-starts it
    with step_scale 0.25 so achieved errors stay close to their targets.

    ref, when given, must expose x_star / y_star and enables the ergodic
    Lagrangian-gap column.  bound_tracker, when given, must expose
    add(n, state, eps, delta, e_norm) and rhs(dist_x0, dist_y0) and fills
    the rhs_bound column.  observer, when given, is called with a dict of
    the iteration pack after every outer step.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if mode not in ("practical", "worst_case"):
        raise ValueError("mode must be 'practical' or 'worst_case'")
    if state0.variant != variant:
        raise ValueError("state0 was built for a different variant")
    validate_step_state(state0, problem.L, problem.L_f, problem.gamma, problem.mu)

    eps_sched = _pick(schedules, "primal_eps")
    delta_sched = _pick(schedules, "dual_delta")
    grad_sched = _pick(schedules, "gradient_norm")

    step_scale = 0.99 if mode == "practical" else 0.25
    warm = mode == "practical"

    record = RunRecord(
        variant=variant,
        metadata={
            "mode": mode,
            "seed": seed,
            "N": N,
            "max_inner": max_inner,
            "tau0": state0.tau,
            "sigma0": state0.sigma,
            "theta0": state0.theta,
        },
    )

    x_prev = x0.copy()
    x = x0.copy()
    y = vcopy(y0)
    warm_z = None
    state = state0
    erg = None
    smooth_weight = 1.0
    cum_inner = 0

    dist_x0 = vdist(x0, ref.x_star) if ref is not None else float("nan")
    dist_y0 = vdist(y0, ref.y_star) if ref is not None else float("nan")

    for n in range(1, N + 1):
        validate_step_state(state, problem.L, problem.L_f, problem.gamma, problem.mu)
        tau, sigma, theta = state.tau, state.sigma, state.theta

        if variant in _THETA_EXTRAPOLATED:
            xt = x + theta * (x - x_prev)
        else:
            xt = 2.0 * x - x_prev

        ybar = vlin(1.0, y, sigma, problem.K.apply(xt))
        y_new = problem.dual_prox(ybar, sigma)
        delta = delta_sched(n) if delta_sched is not None else 0.0

        if grad_sched is not None:
            e = make_gradient_error(n, grad_sched, x.shape, seed)
            e_norm = grad_sched(n)
        else:
            e = None
            e_norm = 0.0

        v = problem.K.adjoint_apply(y_new)
        if problem.grad_f is not None:
            v = v + problem.grad_f(x)
        if e is not None:
            v = v + e
        anchor = x - tau * v

        eps_target = eps_sched(n) if eps_sched is not None else 0.0
        if eps_target <= 0.0:
            eps_target = 1e-14  # exact-limit target when no error is scheduled
        x_new, z, cert = problem.primal_oracle.solve(
            anchor, tau, eps_target, warm_z if warm else None, max_inner, step_scale
        )
        if warm:
            warm_z = z

        if variant in ("basic", "reduced", "exact_pdhg"):
            weight = 1.0
        elif variant in ("primal_accel", "exact_pdhg_accel"):
            weight = sigma / state0.sigma
        elif variant == "dual_accel":
            weight = tau / state0.tau
        else:  # smooth: 1 / theta^{n-1}
            weight = smooth_weight
            smooth_weight /= theta

        erg = ergodic_update(erg, x_new, y_new, weight)
        erg_x, erg_y = ergodic_mean(erg)

        F = problem.primal_energy(x_new)
        F_erg = problem.primal_energy(erg_x)

        if ref is not None:
            lag = problem.lagrangian(erg_x, ref.y_star) - problem.lagrangian(
                ref.x_star, erg_y
            )
        else:
            lag = float("nan")

        rhs = float("nan")
        if bound_tracker is not None:
            bound_tracker.add(n, state, cert.achieved_gap, delta, e_norm)
            rhs = bound_tracker.rhs(dist_x0, dist_y0)

        cum_inner += cert.inner_iterations
        record.append(
            RunEntry(
                n=n,
                tau=tau,
                sigma=sigma,
                theta=theta,
                primal_energy=F,
                ergodic_primal_energy=F_erg,
                lag_gap=lag,
                eps_target=eps_target,
                eps_achieved=cert.achieved_gap,
                delta_achieved=delta,
                grad_error_norm=e_norm,
                inner_iterations=cert.inner_iterations,
                cumulative_inner_iterations=cum_inner,
                rhs_bound=rhs,
            )
        )

        if observer is not None:
            observer(
                {
                    "n": n,
                    "tau": tau,
                    "sigma": sigma,
                    "x_bar": x,
                    "y_bar": y,
                    "x_tilde": xt,
                    "x_check": x_new,
                    "y_check": y_new,
                    "eps": cert.achieved_gap,
                    "delta": delta,
                    "e_norm": e_norm,
                }
            )

        state = update_steps(state, problem.gamma, problem.mu)
        x_prev, x = x, x_new
        y = y_new

    record.final_x = x
    record.final_y = y
    record.ergodic_x, record.ergodic_y = ergodic_mean(erg) if erg else (x, y)
    return record


def run_exact_baseline(
    problem: SaddleProblem,
    variant: str,
    state0: StepState,
    N: int,
    x0: np.ndarray,
    y0,
    ref=None,
    max_inner: int = 20000,
) -> RunRecord:
    """Exact primal-dual iterations used for ground truth and comparison.

    On a problem with an exact primal prox this is the textbook algorithm;
    on a problem with an inexact oracle the prox is driven to near machine
    precision, giving the exact-limit trajectory.
    """
    if variant not in ("exact_pdhg", "exact_pdhg_accel"):
        raise ValueError("variant must be exact_pdhg or exact_pdhg_accel")
    schedules = [ErrorSchedule(kind="zero", role="primal_eps")]
    return run_inexact_pd(
        problem,
        variant,
        state0,
        schedules,
        N,
        x0,
        y0,
        mode="practical",
        ref=ref,
        max_inner=max_inner,
    )


def _pick(schedules: Sequence[ErrorSchedule], role: str) -> Optional[ErrorSchedule]:
    found = [s for s in schedules if s.role == role]
    if len(found) > 1:
        raise ValueError(f"multiple schedules for role {role!r}")
    return found[0] if found else None
