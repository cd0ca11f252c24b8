import math

import numpy as np
import pytest

from ipd.prox import (
    ProxCertificate,
    TVProxSubproblem,
    check_type0_bound,
    dual_prox_l1_data,
    dual_prox_l2_data,
    duality_gap,
    project_box,
    soft_threshold,
    solve_tv_prox,
)


def test_soft_threshold_known_values():
    y = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    assert np.array_equal(soft_threshold(y, 1.0), np.array([-1.0, 0, 0, 0, 1.0]))
    with pytest.raises(ValueError):
        soft_threshold(y, -0.1)


def test_project_box_clamps():
    p = np.array([-3.0, 0.2, 3.0])
    assert np.array_equal(project_box(p, 0.5), np.array([-0.5, 0.2, 0.5]))
    with pytest.raises(ValueError):
        project_box(p, 0.0)


def test_dual_prox_l2_stationarity():
    # the returned point must zero the prox objective's gradient:
    # (y - ybar)/sigma + f + y = 0
    rng = np.random.default_rng(0)
    ybar = rng.standard_normal((4, 4))
    f = rng.standard_normal((4, 4))
    for sigma in (0.3, 1.0, 2.5):
        y = dual_prox_l2_data(ybar, sigma, f)
        g = (y - ybar) / sigma + f + y
        assert np.abs(g).max() < 1e-14


def test_dual_prox_l1_projection():
    ybar = np.array([[5.0, -5.0, 0.1]])
    f = np.array([[1.0, 0.0, 0.0]])
    y = dual_prox_l1_data(ybar, 2.0, f)
    assert np.array_equal(y, np.array([[1.0, -1.0, 0.1]]))
    assert np.abs(y).max() <= 1.0


def test_two_pixel_prox_closed_form():
    # min (x1^2 + (x2-4)^2)/2 + |x2 - x1| has the unique solution (1, 3)
    sub = TVProxSubproblem(anchor=np.array([[0.0, 4.0]]), tau=1.0, lam=1.0)
    x, z, cert = solve_tv_prox(sub, 1e-12, max_inner=5000)
    assert cert.converged
    err = math.sqrt(float(((x - np.array([[1.0, 3.0]])) ** 2).sum()))
    assert err <= cert.distance_bound + 1e-12
    assert err <= 1e-5


def test_two_pixel_prox_brute_force_oracle():
    # independent confirmation of the closed form by grid search
    grid = np.arange(-1.0, 5.0, 1e-3)
    x1, x2 = np.meshgrid(grid, grid, indexing="ij")
    obj = 0.5 * (x1**2 + (x2 - 4.0) ** 2) + np.abs(x2 - x1)
    i, j = np.unravel_index(np.argmin(obj), obj.shape)
    assert abs(grid[i] - 1.0) < 2e-3
    assert abs(grid[j] - 3.0) < 2e-3


def test_primal_from_dual_formula():
    rng = np.random.default_rng(1)
    sub = TVProxSubproblem(anchor=rng.standard_normal((5, 5)), tau=0.7, lam=0.2)
    z = rng.standard_normal((2, 5, 5))
    from ipd.operators import apply_divergence

    x = sub.primal_from_dual(z)
    assert np.allclose(x, sub.anchor + 0.7 * apply_divergence(z))


def test_duality_gap_at_anchor_and_zero_dual():
    from ipd.operators import apply_gradient

    rng = np.random.default_rng(9)
    anchor = rng.uniform(0, 1, (7, 7))
    sub = TVProxSubproblem(anchor=anchor, tau=0.8, lam=0.3)
    expected = 0.3 * float(np.abs(apply_gradient(anchor)).sum())
    got = duality_gap(sub, anchor.copy(), np.zeros((2, 7, 7)))
    assert got == pytest.approx(expected, rel=1e-12)
    flat = TVProxSubproblem(anchor=np.full((7, 7), 0.4), tau=0.8, lam=0.3)
    assert duality_gap(flat, np.full((7, 7), 0.4), np.zeros((2, 7, 7))) == 0.0


def test_duality_gap_nonnegative_and_tight():
    rng = np.random.default_rng(2)
    sub = TVProxSubproblem(anchor=rng.uniform(0, 1, (8, 8)), tau=1.0, lam=0.1)
    for _ in range(10):
        z = rng.uniform(-1, 1, (2, 8, 8))
        x = sub.primal_from_dual(project_box(z, sub.lam))
        assert duality_gap(sub, x, z) >= -1e-12
    x, z, cert = solve_tv_prox(sub, 1e-13, max_inner=20000)
    assert cert.converged
    assert duality_gap(sub, x, z) <= 1e-13


def test_solve_monotone_refinement():
    rng = np.random.default_rng(3)
    sub = TVProxSubproblem(anchor=rng.uniform(0, 1, (10, 10)), tau=0.9, lam=0.15)
    gaps = []
    for eps in (1e-2, 1e-4, 1e-6, 1e-8):
        _, _, cert = solve_tv_prox(sub, eps, max_inner=20000)
        assert cert.converged
        assert cert.achieved_gap <= eps
        gaps.append(cert.achieved_gap)
    assert gaps == sorted(gaps, reverse=True)


def test_certified_distance_bound_holds():
    # type-2 certificate implies a distance ball around the exact prox
    rng = np.random.default_rng(4)
    sub = TVProxSubproblem(anchor=rng.uniform(0, 1, (12, 12)), tau=1.0, lam=0.1)
    x_ref, _, cert_ref = solve_tv_prox(sub, 1e-14, max_inner=50000)
    assert cert_ref.converged
    dists = []
    for eps in (1e-2, 1e-4, 1e-6):
        x, _, cert = solve_tv_prox(sub, eps, max_inner=20000)
        d = math.sqrt(float(((x - x_ref) ** 2).sum()))
        assert d <= cert.distance_bound + 1e-7
        assert cert.distance_bound == pytest.approx(
            math.sqrt(2.0 * sub.tau * cert.achieved_gap), rel=1e-14
        )
        dists.append(d)
    # tightening the target never moves the output away from the exact prox
    assert dists == sorted(dists, reverse=True)


def test_huge_lam_prox_tends_to_mean():
    rng = np.random.default_rng(5)
    anchor = rng.uniform(0, 1, (6, 6))
    sub = TVProxSubproblem(anchor=anchor, tau=1.0, lam=1e6)
    x, _, cert = solve_tv_prox(sub, 1e-8, max_inner=50000)
    assert cert.converged
    assert np.abs(x - anchor.mean()).max() < 1e-4


def test_unconverged_certificate_is_honest():
    rng = np.random.default_rng(6)
    sub = TVProxSubproblem(anchor=rng.uniform(0, 1, (16, 16)), tau=1.0, lam=0.3)
    _, _, cert = solve_tv_prox(sub, 1e-12, max_inner=3)
    assert not cert.converged
    assert cert.achieved_gap > cert.target_eps
    assert cert.inner_iterations == 3


def test_warm_start_reduces_inner_iterations():
    rng = np.random.default_rng(7)
    sub = TVProxSubproblem(anchor=rng.uniform(0, 1, (16, 16)), tau=1.0, lam=0.2)
    _, z, cold = solve_tv_prox(sub, 1e-8, max_inner=50000)
    _, _, warm = solve_tv_prox(sub, 1e-8, warm_z=z, max_inner=50000)
    assert warm.inner_iterations < cold.inner_iterations


def test_lam_zero_prox_is_identity():
    anchor = np.array([[1.0, -2.0], [3.0, 4.0]])
    sub = TVProxSubproblem(anchor=anchor, tau=2.0, lam=0.0)
    x, _, cert = solve_tv_prox(sub, 1e-12)
    assert np.array_equal(x, anchor)
    assert cert.inner_iterations == 0


def test_check_type0_bound():
    z = np.zeros((2, 2))
    assert check_type0_bound(z, z, 2.0, 4.0) == pytest.approx(4.0)
    assert check_type0_bound(z, z, 1.0, 0.0) == 0.0
    assert check_type0_bound(z, z, 1.0, math.sqrt(2.0)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        check_type0_bound(z, z, -1.0, 1.0)
    with pytest.raises(ValueError):
        check_type0_bound(z, z, 1.0, -1.0)
    with pytest.raises(ValueError):
        check_type0_bound(z, np.zeros((3, 3)), 1.0, 1.0)


def test_type0_bound_covers_distance_to_exact_prox():
    # build a subgradient residual from the inner dual iterate and check
    # that the implied precision bounds the distance to a 1e-14 solve
    from ipd.operators import apply_divergence, apply_gradient

    rng = np.random.default_rng(8)
    sub = TVProxSubproblem(anchor=rng.uniform(0, 1, (12, 12)), tau=1.0, lam=0.1)
    x_ref, _, cert_ref = solve_tv_prox(sub, 1e-14, max_inner=50000)
    assert cert_ref.converged
    for eps in (1e-3, 1e-6):
        x, w, cert = solve_tv_prox(sub, eps, max_inner=20000)
        assert cert.converged
        g = apply_gradient(x)
        # a valid subgradient of lam*||grad .||_1 at x agrees with
        # lam*sign on the support of grad x and is free elsewhere
        s = np.where(np.abs(g) > 1e-12, sub.lam * np.sign(g), w)
        e = sub.tau * apply_divergence(w - s)
        eps0 = check_type0_bound(x, sub.anchor, sub.tau, float(np.linalg.norm(e)))
        d = math.sqrt(float(((x - x_ref) ** 2).sum()))
        assert d <= math.sqrt(2.0 * sub.tau * eps0) + 1e-7


def test_exact_certificate():
    c = ProxCertificate.exact()
    assert c.approx_type == "exact"
    assert c.achieved_gap == 0.0 and c.converged


def test_subproblem_validation():
    with pytest.raises(ValueError):
        TVProxSubproblem(anchor=np.zeros((2, 2)), tau=0.0, lam=1.0)
    with pytest.raises(ValueError):
        TVProxSubproblem(anchor=np.zeros((2, 2)), tau=1.0, lam=-1.0)
    with pytest.raises(ValueError):
        solve_tv_prox(
            TVProxSubproblem(anchor=np.zeros((2, 2)), tau=1.0, lam=1.0), 0.0
        )
