import math

import numpy as np
import pytest

import ssglab as sg
from oracles import (gh2d_joint_odd_moment, hermite_monomial_coeffs,
                     odd_power_coeffs_by_solve, wick_joint_odd_moment)
from ssglab.hermite import (CoefficientRangeError, CorrelationRangeError,
                            gauss_hermite_nodes)


class TestHermiteEval:
    def test_low_orders(self):
        assert sg.hermite_eval(0, 1.7) == 1.0
        assert sg.hermite_eval(1, 1.7) == pytest.approx(1.7)
        assert sg.hermite_eval(2, 2.0) == pytest.approx(3.0)   # x^2 - 1
        assert sg.hermite_eval(3, 2.0) == pytest.approx(2.0)   # x^3 - 3x

    def test_matches_monomial_expansion(self, rng):
        xs = rng.uniform(-3, 3, size=50)
        for q in range(10):
            coeffs = [float(c) for c in hermite_monomial_coeffs(q)]
            ref = np.polynomial.polynomial.polyval(xs, coeffs)
            assert sg.hermite_eval(q, xs) == pytest.approx(ref, rel=1e-12, abs=1e-12)

    def test_orthogonality_under_gaussian(self):
        nodes, weights = gauss_hermite_nodes(64)
        H = np.array([sg.hermite_eval(q, nodes) for q in range(10)])
        gram = (H * weights) @ H.T
        expected = np.diag([math.factorial(q) for q in range(10)])
        assert np.max(np.abs(gram - expected)) < 1e-10 * math.factorial(9)


class TestOddPowerCoeffs:
    def test_first_rows(self):
        assert sg.odd_power_coeffs(0).coeffs == (1,)
        assert sg.odd_power_coeffs(1).coeffs == (1, 3)
        assert sg.odd_power_coeffs(2).coeffs == (1, 10, 15)

    def test_matches_triangular_solve_oracle(self):
        for r in range(7):
            assert list(sg.odd_power_coeffs(r).coeffs) == \
                odd_power_coeffs_by_solve(r)

    def test_leading_coefficient_is_one(self):
        for r in range(12):
            assert sg.odd_power_coeffs(r).coeffs[0] == 1

    def test_expansion_identity(self, rng):
        xs = rng.uniform(-3, 3, size=100)
        for r in range(6):
            coeffs = sg.odd_power_coeffs(r).coeffs
            total = sum(c * sg.hermite_eval(2 * (r - j) + 1, xs)
                        for j, c in enumerate(coeffs))
            err = np.abs(xs ** (2 * r + 1) - total)
            assert np.all(err <= 1e-9 * (1 + np.abs(xs) ** (2 * r + 1)))

    def test_cap(self):
        with pytest.raises(CoefficientRangeError):
            sg.odd_power_coeffs(33)


class TestJointOddMoment:
    def test_ell_zero_is_covariance(self):
        assert sg.joint_odd_moment(0, 2.0, 3.0, 0.7) == pytest.approx(0.7)

    def test_cubic_standard(self):
        for rho in (-0.9, -0.3, 0.0, 0.5):
            assert sg.joint_odd_moment(1, 1.0, 1.0, rho) == \
                pytest.approx(6 * rho ** 3 + 9 * rho, abs=1e-14)

    def test_independence_gives_zero(self):
        assert sg.joint_odd_moment(2, 1.3, 0.4, 0.0) == 0.0

    def test_against_wick_enumeration(self, rng):
        for ell in (1, 2):
            for _ in range(5):
                va, vb = rng.uniform(0.2, 2.0, size=2)
                cov = rng.uniform(-0.9, 0.9) * math.sqrt(va * vb)
                ours = sg.joint_odd_moment(ell, va, vb, cov)
                ref = wick_joint_odd_moment(ell, va, vb, cov)
                assert ours == pytest.approx(ref, rel=1e-12)

    def test_against_2d_quadrature(self):
        for ell in (1, 2, 3):
            for rho in (-0.9, -0.5, 0.0, 0.4, 0.9):
                va, vb = 1.7, 0.6
                cov = rho * math.sqrt(va * vb)
                ours = sg.joint_odd_moment(ell, va, vb, cov)
                ref = gh2d_joint_odd_moment(ell, va, vb, cov, nodes=64)
                assert ours == pytest.approx(ref, rel=1e-8, abs=1e-12)

    def test_correlation_range(self):
        with pytest.raises(CorrelationRangeError):
            sg.joint_odd_moment(1, 1.0, 1.0, 1.5)
        with pytest.raises(CorrelationRangeError):
            sg.joint_odd_moment(1, -1.0, 1.0, 0.0)

    def test_perfect_correlation_sixth_moment(self):
        # A = B: E[A^6] = 15 v^3
        v = 0.37
        assert sg.joint_odd_moment(1, v, v, v) == pytest.approx(15 * v ** 3)
