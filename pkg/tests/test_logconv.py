from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_params
from wlanlogconv.logconv import (
    CSV_HEADER,
    BoundaryPointError,
    InfeasibleTargetError,
    geometric_combination,
    lhs_f,
    lhs_f_derivatives,
    midpoint_witness,
    safeguarded_newton,
    solve_delta,
    verify_segment,
)
from wlanlogconv.model import AttemptVector, WlanParams, throughput, x_denominator


def _unit(a=0.1, k=0.0, n=2, payload=1.0):
    return WlanParams(n, a, 1.0 + k, 1.0, [payload] * n)


@pytest.fixture
def worked():
    """n = 2, a = 0.1, K = 0, x1 = (1, 1), x2 = (0.2, 0.2), alpha = 0.5."""
    p = _unit()
    return p, AttemptVector.from_x([1.0, 1.0]), AttemptVector.from_x([0.2, 0.2])


def _exact_f(delta, y, p):
    # F evaluated in exact rational arithmetic so finite differences carry no rounding
    d = Fraction(delta)
    prod = Fraction(1)
    for yi in y:
        prod *= 1 + Fraction(yi) / d
    return d * (Fraction(p.a) + Fraction(p.big_k) * sum(Fraction(yi) for yi in y) / d + prod - 1)


def _quadratic_roots(a, y, target):
    # n = 2, K = 0: a d^2 + (sum y - target) d + prod y = 0
    b = y.sum() - target
    disc = np.sqrt(b * b - 4 * a * y.prod())
    return (-b - disc) / (2 * a), (-b + disc) / (2 * a)


def _random_pair(rng, p):
    caps = np.minimum(p.tau_bar, 1 - 1e-9)
    t1 = AttemptVector.from_tau(caps * (1 - rng.uniform(size=p.n)))
    t2 = AttemptVector.from_tau(caps * (1 - rng.uniform(size=p.n)))
    return t1, t2


class TestNewton:
    def test_finds_root(self):
        r = safeguarded_newton(lambda x: x * x - 2, lambda x: 2 * x, 0.0, 5.0, ftol=1e-15)
        assert r == pytest.approx(np.sqrt(2), rel=1e-14)

    def test_bad_derivative_falls_back_to_bisection(self):
        r = safeguarded_newton(lambda x: x ** 3 - 1, lambda x: 0.0, 0.0, 4.0)
        assert r == pytest.approx(1.0, rel=1e-12)

    def test_unbracketed(self):
        from wlanlogconv.logconv import RootFindingError
        with pytest.raises(RootFindingError):
            safeguarded_newton(lambda x: x + 1, lambda x: 1.0, 0.0, 1.0)


class TestGeometricCombination:
    def test_examples(self):
        v = np.array([0.3, 2.0])
        np.testing.assert_array_equal(geometric_combination(v, v, 0.37), v)
        np.testing.assert_array_equal(geometric_combination([1, 4], [4, 1], 1.0), [1, 4])
        np.testing.assert_array_equal(geometric_combination([1, 4], [4, 1], 0.0), [4, 1])
        np.testing.assert_allclose(geometric_combination([1, 4], [4, 1], 0.5), [2, 2], rtol=1e-15)

    def test_boundary_rejected(self):
        with pytest.raises(BoundaryPointError, match="continuous"):
            geometric_combination([0.0, 1.0], [1.0, 1.0], 0.5)

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            geometric_combination([1.0], [1.0], 1.5)


class TestLhsF:
    def test_examples(self):
        p = _unit()
        assert lhs_f(1.0, [1.0, 1.0], p) == pytest.approx(3.1)
        assert lhs_f(1.0, [0.44721, 0.44721], p) == pytest.approx(1.19443, abs=2e-5)

    def test_equals_denominator_at_one(self, rng):
        for n in (1, 2, 5):
            p = random_params(rng, n)
            y = rng.uniform(0.01, 3, n)
            assert lhs_f(1.0, y, p) == pytest.approx(x_denominator(y, p), rel=1e-15)

    def test_unbounded_both_ends(self):
        p = _unit()
        y = [0.5, 0.5]
        assert lhs_f(1e6, y, p) == pytest.approx(0.1 * 1e6, rel=1e-4)
        assert lhs_f(1e-6, y, p) > 1e5

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            lhs_f(0.0, [1.0], _unit(n=1))
        with pytest.raises(ValueError):
            lhs_f_derivatives(-1.0, [1.0], _unit(n=1))

    def test_closed_form_second_derivative(self):
        p = _unit()
        y = np.array([0.7, 1.9])
        for d in (0.3, 1.0, 4.0):
            assert lhs_f_derivatives(d, y, p)[1] == pytest.approx(2 * y.prod() / d ** 3, rel=1e-14)

    def test_n1_is_affine(self):
        p = _unit(n=1, k=0.5)
        for d in (0.01, 1.0, 100.0):
            first, second = lhs_f_derivatives(d, [0.8], p)
            assert second == 0.0 and first == pytest.approx(p.a)

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    def test_derivatives_vs_finite_differences(self, n, rng):
        for _ in range(40):
            p = random_params(rng, n)
            y = np.exp(rng.uniform(-3, 2, n))
            d = float(np.exp(rng.uniform(-2, 2)))
            h = 1e-4 * d
            f = [_exact_f(d + k * h, y, p) for k in (-1, 0, 1)]
            first, second = lhs_f_derivatives(d, y, p)
            assert second > 0
            assert float((f[2] - f[0]) / (2 * Fraction(h))) == pytest.approx(first, rel=1e-6, abs=1e-12)
            assert float((f[2] - 2 * f[1] + f[0]) / Fraction(h) ** 2) == pytest.approx(second, rel=1e-6)


class TestSolveDelta:
    def test_worked_quadratic(self, worked):
        p, t1, t2 = worked
        y = geometric_combination(t1.x, t2.x, 0.5)
        target = np.sqrt(3.1 * 0.54)
        assert target == pytest.approx(1.29383, abs=1e-5)
        lo, star, hi = solve_delta(y, target, p)
        qlo, qhi = _quadratic_roots(0.1, y, target)
        assert lo == pytest.approx(qlo, rel=1e-12) and hi == pytest.approx(qhi, rel=1e-12)
        assert lo == pytest.approx(0.5871, abs=1e-3) and hi == pytest.approx(3.4070, abs=1e-3)
        assert star == pytest.approx(np.sqrt(y.prod() / 0.1), rel=1e-12)

    def test_identity_has_unit_root(self, rng):
        for n in (2, 3, 5):
            p = random_params(rng, n)
            x = rng.uniform(0.05, 4, n)
            roots = solve_delta(x, x_denominator(x, p), p)
            assert 1.0 in (roots.lower, roots.upper)
            assert roots.upper >= 1.0

    def test_n1_closed_form(self):
        p = _unit(n=1, k=0.5)
        y, target = np.array([0.4]), 2.0
        roots = solve_delta(y, target, p)
        assert roots.lower == roots.upper == pytest.approx((target - 1.5 * 0.4) / 0.1)

    def test_infeasible_target(self):
        p = _unit()
        with pytest.raises(InfeasibleTargetError):
            solve_delta([0.5, 0.5], 0.1, p)

    def test_tangency(self):
        p = _unit()
        y = np.array([0.5, 0.5])
        star = np.sqrt(y.prod() / p.a)
        roots = solve_delta(y, lhs_f(star, y, p), p)
        assert roots.lower == pytest.approx(roots.upper, rel=1e-6)
        assert roots.near_tangent or roots.upper - roots.lower < 1e-6


class TestWitness:
    def test_worked_upper(self, worked):
        p, t1, t2 = worked
        w = midpoint_witness(t1, t2, 0.5, p)
        np.testing.assert_allclose(w.x_star, 0.13126, atol=1e-5)
        s = throughput(w.t_star, p).s
        expected = np.sqrt((1 / 3.1) * (0.2 / 0.54))
        np.testing.assert_allclose(s, expected, rtol=1e-12)
        assert s[0] == pytest.approx(0.34566, abs=1e-4)
        assert w.residual <= 1e-12 and w.delta == w.delta_upper

    def test_worked_lower(self, worked):
        p, t1, t2 = worked
        w = midpoint_witness(t1, t2, 0.5, p, branch="lower")
        # y / delta_lower from the quadratic oracle
        np.testing.assert_allclose(w.x_star, 0.761833, atol=1e-5)
        s = throughput(w.t_star, p).s
        np.testing.assert_allclose(s, np.sqrt((1 / 3.1) * (0.2 / 0.54)), rtol=1e-12)

    def test_alpha_endpoints_echo(self, worked):
        p, t1, t2 = worked
        assert midpoint_witness(t1, t2, 0.0, p).t_star == AttemptVector.from_x(t2.x)
        np.testing.assert_array_equal(midpoint_witness(t1, t2, 1.0, p).x_star, t1.x)

    def test_boundary_endpoint(self, two_station):
        with pytest.raises(BoundaryPointError):
            midpoint_witness(AttemptVector.from_tau([0.0, 0.5]), AttemptVector.from_tau([0.5, 0.5]), 0.5, two_station)

    def test_bad_branch(self, worked):
        p, t1, t2 = worked
        with pytest.raises(ValueError):
            midpoint_witness(t1, t2, 0.5, p, branch="middle")

    @pytest.mark.parametrize("n", [2, 3, 5])
    @pytest.mark.parametrize("capped", [False, True])
    def test_random_witnesses(self, n, capped, rng):
        for _ in range(60):
            p = random_params(rng, n, capped)
            t1, t2 = _random_pair(rng, p)
            alpha = float(rng.uniform())
            w = midpoint_witness(t1, t2, alpha, p)
            assert w.residual <= 1e-9
            assert w.delta_lower <= w.delta_star <= w.delta_upper
            assert w.delta_upper >= 1.0
            assert np.all(w.x_star <= w.y * (1 + 1e-15))
            assert w.in_box(p.tau_bar)

    def test_independent_of_payload_scaling(self, rng):
        for _ in range(30):
            p = random_params(rng, 3)
            q = WlanParams(3, p.sigma, p.t_s, p.t_c, p.payloads * rng.uniform(0.1, 10, 3))
            t1, t2 = _random_pair(rng, p)
            alpha = float(rng.uniform())
            np.testing.assert_array_equal(midpoint_witness(t1, t2, alpha, p).x_star,
                                          midpoint_witness(t1, t2, alpha, q).x_star)

    def test_holder_bound(self, rng):
        for _ in range(300):
            n = int(rng.integers(2, 6))
            p = random_params(rng, n)
            x1, x2 = np.exp(rng.uniform(-4, 3, (2, n)))
            alpha = float(rng.uniform())
            y = geometric_combination(x1, x2, alpha)
            target = x_denominator(x1, p) ** alpha * x_denominator(x2, p) ** (1 - alpha)
            assert target >= lhs_f(1.0, y, p) * (1 + 1e-14)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-12, 12), min_size=4, max_size=4), st.floats(0, 1))
    def test_extreme_log_x(self, logs, alpha):
        p = WlanParams(2, 3.0, 50.0, 20.0, [1000.0, 300.0])
        t1 = AttemptVector.from_x(np.exp(logs[:2]))
        t2 = AttemptVector.from_x(np.exp(logs[2:]))
        w = midpoint_witness(t1, t2, alpha, p)
        assert w.residual <= 1e-9
        assert w.delta_upper >= 1.0


class TestSegment:
    def test_identical_endpoints(self, two_station):
        t = AttemptVector.from_tau([0.3, 0.7])
        rep = verify_segment(t, t, two_station)
        assert rep.max_residual == 0.0 and rep.passed and rep.all_in_box
        assert all(w.delta == 1.0 for w in rep.rows)

    def test_capped_box(self, rng):
        p = WlanParams(3, 10, 100, 100, [8000] * 3, [0.5, 0.5, 0.5])
        for _ in range(20):
            t1, t2 = _random_pair(rng, p)
            rep = verify_segment(t1, t2, p, num_alphas=11)
            assert len(rep.rows) == 11 and rep.passed and rep.all_in_box

    def test_csv_rows(self, two_station):
        rep = verify_segment(AttemptVector.from_tau([0.2, 0.6]), AttemptVector.from_tau([0.7, 0.1]), two_station, 3)
        rows = list(rep.csv_rows())
        assert len(rows) == 3 and all(len(r) == len(CSV_HEADER) for r in rows)
        assert [r[0] for r in rows] == [0.0, 0.5, 1.0]
