import math

import numpy as np
import pytest

import ssglab as sg
from oracles import wick_variance_Vn
from ssglab.covariance_engine import (GridSizeError, GridSpec,
                                      NotPositiveSemidefiniteError,
                                      build_increment_covariance,
                                      cholesky_factor, increment_variances,
                                      inequality_audit,
                                      midpoint_inner_products, rng_stream,
                                      sample_path, sample_path_values)


class TestGridSpec:
    def test_steps(self):
        g = GridSpec(8, 1.0)
        assert g.N == 8
        assert g.steps(1.0) == 8
        assert g.steps(0.5) == 4
        assert g.steps(0.01) == 0

    def test_validation(self):
        with pytest.raises(GridSizeError):
            GridSpec(1, 1.0)
        with pytest.raises(GridSizeError):
            GridSpec(8, 0.01)
        with pytest.raises(GridSizeError):
            GridSpec(8, 1.0).steps(2.0)


class TestGram:
    def test_fbm_matches_stationary_second_difference(self):
        # same quantity through a disjoint formula: stationary increments
        for n in (16, 64, 256):
            H = 1 / 6
            m = sg.make_model("fbm", H=H)
            ic = build_increment_covariance(m, GridSpec(n, 1.0))
            d = np.abs(np.subtract.outer(np.arange(n), np.arange(n))).astype(float)
            ref = 0.5 * n ** (-2 * H) * ((d + 1) ** (2 * H)
                                         + np.abs(d - 1) ** (2 * H)
                                         - 2 * d ** (2 * H))
            assert np.allclose(ic.gram, ref, rtol=1e-12,
                               atol=1e-12 * n ** (-2 * H))

    def test_first_entry_is_variance_of_first_increment(self, catalog):
        for m in catalog:
            ic = build_increment_covariance(m, GridSpec(32, 1.0))
            phi1 = sg.phi(m, 1.0)
            assert ic.gram[0, 0] == pytest.approx(32.0 ** (-2 * m.beta) * phi1,
                                                  rel=1e-14)

    def test_symmetry_and_xi(self, catalog):
        for m in catalog:
            ic = build_increment_covariance(m, GridSpec(48, 1.0))
            assert np.array_equal(ic.gram, ic.gram.T)
            # xi is the correctly rounded square root of the diagonal
            assert np.array_equal(ic.xi, np.sqrt(np.diag(ic.gram)))

    def test_cauchy_schwarz(self, catalog):
        for m in catalog:
            ic = build_increment_covariance(m, GridSpec(64, 1.0))
            bound = np.outer(ic.xi, ic.xi)
            assert np.all(np.abs(ic.gram) <= bound * (1 + 1e-12))

    def test_diagonal_matches_covariance_route(self, catalog):
        # xi_j^2 recomputed from four covariance evaluations (small j only,
        # where the four-point route is still accurate)
        n = 32
        for m in catalog:
            xi2 = increment_variances(m, GridSpec(n, 1.0))
            j = np.arange(8)
            direct = (sg.covariance(m, (j + 1) / n, (j + 1) / n)
                      - 2 * sg.covariance(m, j / n, (j + 1) / n)
                      + sg.covariance(m, j / n, j / n))
            assert xi2[:8] == pytest.approx(direct, rel=1e-9)

    def test_cap(self, fbm16):
        with pytest.raises(GridSizeError):
            build_increment_covariance(fbm16, GridSpec(64, 1.0), cap=32)


class TestMidpointInnerProducts:
    def test_equals_half_second_moment_difference(self, catalog):
        # two routes to <e~_j, d_j>: the closed power-law form versus
        # differences of covariance evaluations; the difference of two
        # O(phi(1)) quantities carries an eps*phi(1) roundoff floor
        n = 40
        for m in catalog:
            eps = midpoint_inner_products(m, GridSpec(n, 1.0))
            j = np.arange(n)
            direct = 0.5 * (sg.covariance(m, (j + 1) / n, (j + 1) / n)
                            - sg.covariance(m, j / n, j / n))
            assert np.allclose(eps, direct, rtol=1e-14,
                               atol=1e-15 * sg.phi(m, 1.0))

    def test_telescoping_sum(self, catalog):
        n = 40
        for m in catalog:
            eps = midpoint_inner_products(m, GridSpec(n, 1.0))
            total = 0.5 * sg.covariance(m, 1.0, 1.0)
            assert math.fsum(eps) == pytest.approx(total, rel=1e-13)


class TestCholesky:
    def test_single_increment(self, fbm16):
        ic = build_increment_covariance(fbm16, GridSpec(2, 0.5))
        f = cholesky_factor(ic)
        assert f.L.shape == (1, 1)
        assert f.L[0, 0] == pytest.approx(
            math.sqrt(2.0 ** (-2 * fbm16.beta) * sg.phi(fbm16, 1.0)))

    def test_fbm_256(self, fbm16):
        ic = build_increment_covariance(fbm16, GridSpec(256, 1.0))
        f = cholesky_factor(ic)
        resid = np.max(np.abs(f.L @ f.L.T - ic.gram))
        assert resid <= 1e-10 * np.max(ic.xi ** 2)

    def test_dw2_factorizes(self):
        m = sg.make_model("dw2", a=1 / 3)
        ic = build_increment_covariance(m, GridSpec(64, 1.0))
        cholesky_factor(ic)  # must not raise

    def test_indefinite_custom_raises_with_index(self):
        m = sg.make_model("custom", phi=lambda x: np.cos(3.0 * (x - 1.0)),
                          beta=0.5, alpha=0.5, lambda_=1.0, nu_decay=2.0)
        ic = build_increment_covariance(m, GridSpec(32, 1.0))
        with pytest.raises(NotPositiveSemidefiniteError) as err:
            cholesky_factor(ic)
        assert err.value.index >= 0
        assert err.value.pivot < 0

    def test_clamped_semidefinite(self):
        # rank-one law X_t = t^(1/2) Z  <=>  beta = 1/2, phi(x) = sqrt(x);
        # every pivot beyond the first is a roundoff-level zero, clamped
        m = sg.make_model("custom", phi=np.sqrt,
                          beta=0.5, alpha=0.9, lambda_=1.0, nu_decay=2.0)
        ic = build_increment_covariance(m, GridSpec(8, 1.0))
        f = cholesky_factor(ic)
        assert f.clamped > 0
        assert np.max(np.abs(f.L @ f.L.T - ic.gram)) <= 1e-10


class TestSampling:
    def test_determinism(self, fbm16):
        f = cholesky_factor(build_increment_covariance(fbm16, GridSpec(64, 1.0)))
        a = sample_path(f, rng_stream(7, 0, 0, 0))
        b = sample_path(f, rng_stream(7, 0, 0, 0))
        c = sample_path(f, rng_stream(7, 0, 0, 1))
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)
        assert a.values[0] == 0.0

    def test_stream_keys_disjoint(self):
        x = rng_stream(1, 2, 3).standard_normal(4)
        y = rng_stream(1, 3, 2).standard_normal(4)
        assert not np.array_equal(x, y)

    def test_batch_matches_single(self, fbm16):
        # same draws; matrix-matrix versus matrix-vector products may
        # round differently, so agreement is to relative precision
        f = cholesky_factor(build_increment_covariance(fbm16, GridSpec(32, 1.0)))
        streams = [rng_stream(3, 0, 0, i) for i in range(5)]
        batch = sample_path_values(f, streams, 5)
        for i in range(5):
            single = sample_path(f, rng_stream(3, 0, 0, i))
            assert np.allclose(batch[i], single.values, rtol=1e-12, atol=1e-13)

    def test_terminal_variance(self, fbm16):
        # Var X_1 = phi(1) = 1 for fbm; 20000 exact draws, 3% window
        n, M = 256, 20000
        f = cholesky_factor(build_increment_covariance(fbm16, GridSpec(n, 1.0)))
        streams = [rng_stream(11, 0, 0, i) for i in range(M)]
        X = sample_path_values(f, streams, M)
        var = np.var(X[:, -1], ddof=1)
        assert abs(var - 1.0) < 0.03

    def test_increment_covariance_vs_oracle(self, fbm16):
        n, M = 64, 20000
        ic = build_increment_covariance(fbm16, GridSpec(n, 1.0))
        f = cholesky_factor(ic)
        streams = [rng_stream(13, 0, 0, i) for i in range(M)]
        X = sample_path_values(f, streams, M)
        d0 = X[:, 1] - X[:, 0]
        d1 = X[:, 2] - X[:, 1]
        emp = np.mean(d0 * d1)
        se = np.std(d0 * d1, ddof=1) / math.sqrt(M)
        assert abs(emp - ic.gram[0, 1]) <= 5 * se


class TestWickCrossValidation:
    def test_small_grid_second_moment(self):
        # engine gram feeding the pairing oracle must reproduce E[V_n^2]
        # as computed by the closed-form chaos route, for a nonstationary
        # model as well
        for spec, ell in (("fbm:H=0.1666666666666667", 1), ("dw1:a=0.25", 2)):
            m = sg.parse_model_spec(spec)
            ic = build_increment_covariance(m, GridSpec(8, 1.0))
            ref = wick_variance_Vn(ic.gram, ell)
            ours = sg.exact_variance_Vn(m, ell, 8, 1.0)
            assert ours == pytest.approx(ref, rel=1e-8)


class TestInequalityAudit:
    def test_fbm_bounded(self, fbm16):
        rep = inequality_audit(fbm16, [64, 128, 256, 512])
        assert rep.all_passed, rep.values

    def test_report_structure(self, fbm16):
        rep = inequality_audit(fbm16, [64, 128])
        assert set(rep.values) == {
            "variance_power_law", "variance_uniform", "cov_midrange",
            "cov_farrange", "row_sum", "midpoint_inner_power",
            "increment_residual"}
        assert all(len(v) == 2 for v in rep.values.values())

    def test_validation(self, fbm16):
        with pytest.raises(GridSizeError):
            inequality_audit(fbm16, [4, 64])
        with pytest.raises(GridSizeError):
            inequality_audit(fbm16, [128, 64])
