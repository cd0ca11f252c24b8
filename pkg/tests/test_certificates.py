import math

import numpy as np
import pytest

from ipd.certificates import (
    CertificateAccumulator,
    SaddleReference,
    fit_loglog_slope,
    lagrangian_gap,
    record_metric,
    recursion_bound,
    theorem_rhs,
)
from ipd.solvers import StepState


def step(variant, tau=1.0, sigma=1.0, theta=1.0):
    return StepState(tau=tau, sigma=sigma, theta=theta, beta=0.0, variant=variant)


class TestAccumulator:
    def test_reduced_sums_eps_plus_delta(self):
        acc = CertificateAccumulator(variant="reduced", approx_type=2)
        for n in range(1, 4):
            acc.add(n, step("reduced"), eps_n=1.0, delta_n=1.0)
        assert acc.B == pytest.approx(6.0)
        assert acc.A == 0.0
        assert acc.T == pytest.approx(3.0)

    def test_basic_type2_contributions(self):
        acc = CertificateAccumulator(variant="basic", approx_type=2, tau0=2.0)
        acc.add(1, step("basic", tau=2.0), eps_n=1.0, delta_n=0.5)
        # type-2: no distance term in A, B picks up tau (eps + delta)
        assert acc.A == 0.0
        assert acc.B == pytest.approx(3.0)

    def test_basic_type1_has_root_term(self):
        acc = CertificateAccumulator(variant="basic", approx_type=1, tau0=2.0)
        acc.add(1, step("basic", tau=2.0), eps_n=1.0, delta_n=0.0,
                grad_err_norm=0.5)
        assert acc.A == pytest.approx(2.0 * 0.5 + math.sqrt(4.0))
        assert acc.B == pytest.approx(2.0)

    def test_basic_type3_excludes_eps_from_B(self):
        acc = CertificateAccumulator(variant="basic", approx_type=3, tau0=1.0)
        acc.add(1, step("basic"), eps_n=2.0, delta_n=0.25)
        assert acc.A == pytest.approx(2.0)
        assert acc.B == pytest.approx(0.25)

    def test_smooth_geometric_weights(self):
        # weights 1, 1/theta, 1/theta^2 with theta = 1/2 give 1 + 2 + 4
        acc = CertificateAccumulator(variant="smooth", approx_type=2)
        for n in range(1, 4):
            acc.add(n, step("smooth", theta=0.5), eps_n=1.0, delta_n=0.0)
        assert acc.B == pytest.approx(7.0)
        assert acc.T == pytest.approx(7.0)
        assert acc.theta == 0.5

    def test_dual_accel_weights_follow_tau(self):
        acc = CertificateAccumulator(variant="dual_accel", approx_type=2,
                                     tau0=1.0, sigma0=1.0)
        acc.add(1, step("dual_accel", tau=1.0), eps_n=0.1, delta_n=0.0)
        acc.add(2, step("dual_accel", tau=3.0), eps_n=0.1, delta_n=0.0)
        assert acc.T == pytest.approx(1.0 + 3.0)
        assert acc.B == pytest.approx(2.0 * 1.0 * 0.1 + 2.0 * 3.0 * 0.1)

    def test_consecutive_n_enforced(self):
        acc = CertificateAccumulator(variant="reduced", approx_type=2)
        acc.add(1, step("reduced"), 0.0, 0.0)
        with pytest.raises(ValueError):
            acc.add(3, step("reduced"), 0.0, 0.0)

    def test_rejects_unknown_inputs(self):
        with pytest.raises(ValueError):
            CertificateAccumulator(variant="reduced", approx_type=4)
        with pytest.raises(ValueError):
            CertificateAccumulator(variant="exact_pdhg", approx_type=2)


class TestTheoremRhs:
    def test_reduced_closed_form(self):
        acc = CertificateAccumulator(variant="reduced", approx_type=2,
                                     tau0=0.5, sigma0=2.0)
        acc.add(1, step("reduced", tau=0.5, sigma=2.0), eps_n=0.3, delta_n=0.0)
        acc.add(2, step("reduced", tau=0.5, sigma=2.0), eps_n=0.1, delta_n=0.0)
        got = theorem_rhs(acc, dist_x0=2.0, dist_y0=1.0)
        expect = (4.0 / (2 * 0.5) + 1.0 / (2 * 2.0) + 0.4) / 2.0
        assert got == pytest.approx(expect, rel=1e-14)

    def test_basic_closed_form(self):
        acc = CertificateAccumulator(variant="basic", approx_type=2,
                                     tau0=1.0, sigma0=1.0)
        acc.add(1, step("basic"), eps_n=0.5, delta_n=0.0)
        got = theorem_rhs(acc, dist_x0=1.0, dist_y0=1.0)
        base = 1.0 + 1.0 + 0.0 + math.sqrt(2 * 0.5)
        assert got == pytest.approx(base * base / 2.0, rel=1e-14)

    def test_empty_accumulator_is_infinite(self):
        acc = CertificateAccumulator(variant="reduced", approx_type=2)
        assert math.isinf(theorem_rhs(acc, 1.0, 1.0))

    def test_independent_recomputation_matches(self):
        # rebuild the same sums by direct summation and compare to 1e-10
        rng = np.random.default_rng(0)
        acc = CertificateAccumulator(variant="dual_accel", approx_type=2,
                                     tau0=1.0, sigma0=1.0)
        taus, epss = [], []
        tau = 1.0
        for n in range(1, 51):
            eps = float(rng.uniform(0, 0.1))
            acc.add(n, step("dual_accel", tau=tau, sigma=1.0 / tau), eps, 0.0)
            taus.append(tau)
            epss.append(eps)
            tau *= 1.01
        B = 2.0 * sum(t * e for t, e in zip(taus, epss))
        T = sum(t / 1.0 for t in taus)
        base = 2.0 + math.sqrt(1.0) * 3.0 + math.sqrt(2.0 * B)
        expect = base * base / (2.0 * 1.0 * T)
        got = theorem_rhs(acc, dist_x0=2.0, dist_y0=3.0)
        assert got == pytest.approx(expect, rel=1e-10)


class TestRecursionBound:
    def test_zero_lambdas_reduce_to_sqrt(self):
        S = np.array([1.0, 4.0, 9.0])
        lam = np.zeros(3)
        assert np.array_equal(recursion_bound(S, lam), np.array([1.0, 2.0, 3.0]))

    def test_validation(self):
        with pytest.raises(ValueError):
            recursion_bound([1.0, 0.5], [0.0, 0.0])
        with pytest.raises(ValueError):
            recursion_bound([1.0, 2.0], [-1.0, 0.0])
        with pytest.raises(ValueError):
            recursion_bound([1.0], [0.0, 0.0])

    def test_random_recursions_respect_bound(self):
        # build worst-case sequences saturating u_N^2 <= S_N + sum lam_n u_n
        rng = np.random.default_rng(42)
        for _ in range(1000):
            N = int(rng.integers(1, 30))
            lam = rng.uniform(0, 2, N)
            S = np.cumsum(rng.uniform(0, 3, N))
            u = np.zeros(N)
            carried = 0.0
            for k in range(N):
                # largest root of u^2 - lam_k u - (S_k + carried) = 0
                u[k] = 0.5 * lam[k] + math.sqrt(
                    S[k] + carried + 0.25 * lam[k] ** 2
                )
                carried += lam[k] * u[k]
            bound = recursion_bound(S, lam)
            assert np.all(u <= bound + 1e-12 * np.maximum(1.0, bound))


class TestSummationAsymptotics:
    def test_partial_sums_of_power_decay(self):
        # sum n^-a: bounded for a > 1, ~ log N at a = 1, ~ N^(1-a)/(1-a) below
        n = np.arange(1, 10**6 + 1, dtype=np.float64)
        s2 = np.sum(n**-2.0)
        assert abs(s2 - math.pi**2 / 6.0) < 1e-5
        s1 = np.sum(n**-1.0)
        assert abs(s1 / math.log(1e6) - 1.0) < 0.05
        a = 0.5
        sa = np.sum(n**-a)
        assert abs(sa * (1 - a) / 1e6 ** (1 - a) - 1.0) < 0.01

    def test_growth_window_for_power_sums(self):
        # sum_{n<=N} n^a lands in the [0.9, 1.1]-window around N^(1+a)/(1+a)
        N = 10**4
        n = np.arange(1, N + 1, dtype=np.float64)
        for a in (-0.5, 0.5):
            ratio = float(np.sum(n**a)) / N ** (1.0 + a)
            assert 0.9 / (1.0 + a) <= ratio
            assert ratio <= 1.1 / (1.0 + a) + N ** (a - 1.0)


class TestSlopeFitting:
    def test_recovers_power_law(self):
        ns = np.arange(1, 500)
        vals = 3.0 * ns**-1.5
        slope, r2 = fit_loglog_slope(ns, vals)
        assert slope == pytest.approx(-1.5, abs=1e-12)
        assert r2 == pytest.approx(1.0)

    def test_recovers_geometric_decay_in_semilog(self):
        ns = np.arange(1, 200)
        vals = 2.0 * 0.9**ns
        slope, _ = fit_loglog_slope(ns, vals, semilog=True)
        assert slope == pytest.approx(math.log(0.9), abs=1e-12)

    def test_window_restricts_fit(self):
        ns = np.arange(1, 1000)
        vals = np.where(ns < 100, 1.0, 10.0 * ns**-1.0)
        slope, _ = fit_loglog_slope(ns, vals, n_range=(100, 999))
        assert slope == pytest.approx(-1.0, abs=1e-10)

    def test_nonpositive_values_warn_and_drop(self):
        ns = np.arange(1, 20)
        vals = 1.0 * ns**-1.0
        vals[3] = -1.0
        with pytest.warns(UserWarning):
            slope, _ = fit_loglog_slope(ns, vals)
        assert slope == pytest.approx(-1.0, abs=1e-10)

    def test_too_few_points_raise(self):
        with pytest.raises(ValueError):
            fit_loglog_slope([1, 2, 3], [1.0, 0.5, 0.3])

    def test_invariant_under_positive_scaling(self):
        ns = np.arange(1, 300)
        vals = 0.7 * ns**-1.2
        s1, _ = fit_loglog_slope(ns, vals)
        s2, _ = fit_loglog_slope(ns, 1e6 * vals)
        assert abs(s1 - s2) <= 1e-12

    def test_accepts_record_and_metric_name(self):
        from ipd.solvers import RunRecord, RunEntry

        rec = RunRecord(variant="reduced")
        for n in range(1, 50):
            F = 2.0 + 3.0 * n**-1.5
            rec.append(RunEntry(n, 1, 1, 1, F, F, 0, 0, 0, 0, 0, 0, n,
                                float("nan")))
        ref = SaddleReference(None, None, F_star=2.0)
        slope, r2 = fit_loglog_slope(rec, "rel_err", ref=ref)
        assert slope == pytest.approx(-1.5, abs=1e-10)
        assert r2 == pytest.approx(1.0)


class TestLagrangianGap:
    def test_zero_at_saddle_of_scalar_model(self):
        # 1x1 quadratic model: L(u, y) = y (u - f) - y^2 / 2, saddle (f, 0)
        f = 2.0

        def lag(u, y):
            return float(np.sum(y * (u - f) - 0.5 * y * y))

        class P:
            lagrangian = staticmethod(lag)

        ref = SaddleReference(x_star=np.array([[f]]), y_star=np.array([[0.0]]),
                              F_star=0.0)
        assert lagrangian_gap(P, np.array([[f]]), np.array([[0.0]]), ref) == 0.0
        g = lagrangian_gap(P, np.array([[f]]), np.array([[0.4]]), ref)
        assert g == pytest.approx(0.08)

    def test_infeasible_dual_gives_inf(self):
        def lag(u, y):
            return math.inf if float(np.abs(y).max()) > 1 else 0.0

        class P:
            lagrangian = staticmethod(lag)

        ref = SaddleReference(x_star=np.zeros((1, 1)), y_star=np.zeros((1, 1)),
                              F_star=0.0)
        assert math.isinf(
            lagrangian_gap(P, np.zeros((1, 1)), np.full((1, 1), 2.0), ref)
        )


class TestRecordMetric:
    def test_relative_error_extraction(self):
        from ipd.solvers import RunRecord, RunEntry

        rec = RunRecord(variant="reduced")
        for n, F in ((1, 3.0), (2, 2.5)):
            rec.append(RunEntry(n, 1, 1, 1, F, F + 0.1, 0, 0, 0, 0, 0, 0, n,
                                float("nan")))
        ref = SaddleReference(None, None, F_star=2.0)
        ns, vals = record_metric(rec, "rel_err", ref)
        assert np.allclose(vals, [0.5, 0.25])
        ns, vals = record_metric(rec, "erg_rel_err", ref)
        assert np.allclose(vals, [0.55, 0.3])
        with pytest.raises(ValueError):
            record_metric(rec, "rel_err", None)
