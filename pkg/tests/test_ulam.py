import math

import numpy as np
import pytest

from rdslab.errors import ConfigError, GridTooCoarse, ThetaTooLarge
from rdslab.ulam import (UlamGrid, build_tilted, dump_operator, ldp_rate_bound,
                         load_operator, minimize_rate_bound,
                         second_eigenvalue_modulus, spectral_radius,
                         taylor_check)

GRID = UlamGrid(256)


class TestBuild:
    def test_stochastic_at_zero_tilt(self, doubling, ternary, logistic):
        for model in (doubling, ternary, logistic):
            op = build_tilted(model, 0.1, GRID, 0.0)
            rowsums = op.matrix.sum(axis=1)
            assert np.max(np.abs(rowsums - 1.0)) < 1e-10

    def test_constant_tilt_factorizes(self, doubling):
        # g is constant for the doubling map, so the tilt is a scalar factor
        op0 = build_tilted(doubling, 0.1, GRID, 0.0)
        op = build_tilted(doubling, 0.1, GRID, 0.5)
        assert np.allclose(op.matrix, 2.0 ** -0.5 * op0.matrix, atol=1e-15)

    def test_theta_cap(self, logistic):
        with pytest.raises(ThetaTooLarge):
            build_tilted(logistic, 0.1, GRID, 0.9)  # cap is 0.9 / beta = 0.9

    def test_grid_too_coarse(self, doubling):
        with pytest.raises(GridTooCoarse):
            build_tilted(doubling, 0.005, GRID, 0.1)

    def test_quadrature_report_present(self, logistic):
        op = build_tilted(logistic, 0.1, GRID, 0.2)
        assert op.quadrature_report["rows_sampled"] > 0
        assert op.quadrature_report["max_refine_delta"] < 1e-3


class TestSpectrum:
    def test_lambda0_is_one(self, doubling, ternary, logistic):
        for model in (doubling, ternary, logistic):
            res = spectral_radius(build_tilted(model, 0.1, GRID, 0.0))
            assert abs(res.lambda_theta - 1.0) <= 1e-8

    def test_doubling_closed_form(self, doubling):
        for theta in (0.1, 0.5, 0.9):
            res = spectral_radius(build_tilted(doubling, 0.1, GRID, theta))
            assert abs(res.lambda_theta - 2.0 ** -theta) <= 1e-6

    def test_eigenvector_positive_and_residual(self, logistic):
        res = spectral_radius(build_tilted(logistic, 0.1, GRID, 0.1), tol=1e-11)
        assert res.residual <= 1e-11
        assert np.all(res.eigenvector > 0)
        assert np.max(res.eigenvector) == pytest.approx(1.0)

    def test_against_dense_eigensolver(self, logistic):
        op = build_tilted(logistic, 0.1, UlamGrid(256), 0.1)
        power = spectral_radius(op, tol=1e-12)
        dense = np.max(np.abs(np.linalg.eigvals(op.matrix)))
        assert power.lambda_theta == pytest.approx(float(dense), abs=1e-6)

    def test_spectral_gap_proxy(self, logistic):
        op = build_tilted(logistic, 0.1, UlamGrid(128), 0.0)
        assert second_eigenvalue_modulus(op) < 0.9

    def test_grid_refinement_consistency(self, logistic):
        lam = {}
        for n in (128, 256):
            res = spectral_radius(build_tilted(logistic, 0.1, UlamGrid(n), 0.2))
            lam[n] = res.lambda_theta
        assert abs(lam[128] - lam[256]) < 1e-3


class TestTaylor:
    def test_doubling_exponent_is_two(self, doubling):
        thetas = [0.05, 0.1, 0.15, 0.2, 0.3, 0.4]
        tbl = taylor_check(doubling, 0.1, GRID, thetas, -math.log(2))
        # lambda_theta = e^{theta * lambda}, so the residual is quadratic
        assert tbl.exponent_p == pytest.approx(2.0, abs=0.1)
        assert tbl.passes

    def test_zero_theta_rejected(self, doubling):
        with pytest.raises(ConfigError):
            taylor_check(doubling, 0.1, GRID, [0.0, 0.1], -math.log(2))

    def test_rows_expose_residuals(self, doubling):
        tbl = taylor_check(doubling, 0.1, GRID, [0.1, 0.2], -math.log(2))
        for row in tbl.rows:
            expected = 2.0 ** -row.theta - 1.0 + row.theta * math.log(2)
            assert row.residual == pytest.approx(expected, abs=1e-6)


class TestRateBound:
    def test_doubling_closed_form_arithmetic(self):
        rho = ldp_rate_bound(1.0, 0.1, 0.5, -math.log(2))
        assert rho == pytest.approx(math.exp(-0.1))
        assert rho < 1.0

    def test_no_deviation_no_decay(self, doubling):
        # at epsilon -> 0 the bound cannot certify decay: rho >= 1
        for theta in (0.1, 0.5, 1.0):
            lam_theta = 2.0 ** -theta
            rho = math.exp(-(-math.log(2)) * theta) * lam_theta
            assert rho >= 1.0 - 1e-6

    def test_minimize_over_grid(self, doubling):
        theta, rho = minimize_rate_bound(doubling, 0.1, GRID,
                                         [0.25, 0.5, 1.0, 1.5], 0.1, -math.log(2))
        assert rho < 1.0
        assert theta in (0.25, 0.5, 1.0, 1.5)

    def test_validation(self):
        with pytest.raises(ConfigError):
            ldp_rate_bound(0.0, 0.1, 1.0, -0.5)


def test_operator_binary_round_trip(tmp_path, doubling):
    op = build_tilted(doubling, 0.1, UlamGrid(64), 0.3)
    path = tmp_path / "op.bin"
    dump_operator(op, path)
    back = load_operator(path)
    assert back.grid.n_cells == 64
    assert back.theta == pytest.approx(0.3)
    assert back.sigma == pytest.approx(0.1)
    assert np.array_equal(back.matrix, op.matrix)
