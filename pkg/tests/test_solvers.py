"""Closed-form solvers vs dense oracles; iterative solver contracts."""

import numpy as np
import pytest

from rfcd.images import (
    Decimation,
    DegradationModel,
    MultiBandImage,
    NoiseModel,
    build_band_averaging,
    build_gaussian_blur,
)
from rfcd.regularization import l21_norm
from rfcd.solvers import (
    AdmmBlock,
    AdmmPlan,
    SolverOptions,
    admm_minimize,
    forward_backward_l21,
    largest_eigenvalue,
    solve_band_superres,
    solve_ridge_denoise,
    solve_spectral_deblur,
    solve_sylvester_fusion,
    solve_sylvester_general,
)

from oracles import (
    band_weight_diag,
    dense_forward_matrix,
    dense_spatial_matrix,
    solve_dense_fusion,
)


def rand_image(rng, bands, h, w):
    return MultiBandImage.from_cube(rng.normal(size=(bands, h, w)))


def rand_noise(rng, bands):
    return NoiseModel(rng.uniform(0.2, 2.0, bands))


def test_largest_eigenvalue_matches_numpy():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 6))
    a = a @ a.T
    assert largest_eigenvalue(a, iters=200) == pytest.approx(
        np.linalg.eigvalsh(a)[-1], rel=1e-8)


class TestRidgeDenoise:
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_dense_oracle(self, seed):
        rng = np.random.default_rng(seed)
        nb, h, w = 3, 4, 4
        y1, y2, xbar = (rand_image(rng, nb, h, w) for _ in range(3))
        n1, n2 = rand_noise(rng, nb), rand_noise(rng, nb)
        lam = float(rng.uniform(0.01, 1.0))
        out = solve_ridge_denoise(y1, y2, xbar, n1, n2, lam)
        eye = np.eye(nb * h * w)
        x = solve_dense_fusion(
            eye, band_weight_diag(n1.inverse_variances(), h * w),
            y1.data.ravel(),
            eye, band_weight_diag(n2.inverse_variances(), h * w),
            y2.data.ravel(), lam, xbar.data.ravel())
        np.testing.assert_allclose(out.data.ravel(), x, rtol=1e-6, atol=1e-9)

    def test_equal_noise_zero_lam_is_mean(self):
        rng = np.random.default_rng(1)
        y1, y2 = rand_image(rng, 2, 3, 3), rand_image(rng, 2, 3, 3)
        n = NoiseModel.isotropic(0.5, 2)
        out = solve_ridge_denoise(y1, y2, y1, n, n, 0.0)
        np.testing.assert_allclose(out.data, 0.5 * (y1.data + y2.data))


class TestSpectralDeblur:
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_dense_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        nb, h, w = 4, 4, 4
        l1 = build_band_averaging([[0, 1], [2, 3]], nb)
        l2 = build_band_averaging([[0], [1], [2]], nb)
        y1 = rand_image(rng, 2, h, w)
        y2 = rand_image(rng, 3, h, w)
        xbar = rand_image(rng, nb, h, w)
        n1, n2 = rand_noise(rng, 2), rand_noise(rng, 3)
        lam = float(rng.uniform(0.01, 1.0))
        out = solve_spectral_deblur(y1, l1, y2, xbar, n1, n2, lam, l2=l2)
        x = solve_dense_fusion(
            np.kron(l1.matrix, np.eye(h * w)),
            band_weight_diag(n1.inverse_variances(), h * w), y1.data.ravel(),
            np.kron(l2.matrix, np.eye(h * w)),
            band_weight_diag(n2.inverse_variances(), h * w), y2.data.ravel(),
            lam, xbar.data.ravel())
        np.testing.assert_allclose(out.data.ravel(), x, rtol=1e-6, atol=1e-9)

    def test_singular_without_ridge(self):
        rng = np.random.default_rng(2)
        l1 = build_band_averaging([[0, 1]], 2)
        y1 = rand_image(rng, 1, 2, 2)
        y2 = rand_image(rng, 1, 2, 2)
        xbar = rand_image(rng, 2, 2, 2)
        with pytest.raises(ValueError, match="lam > 0"):
            solve_spectral_deblur(y1, l1, y2, xbar,
                                  NoiseModel.isotropic(1.0, 1),
                                  NoiseModel.isotropic(1.0, 1), 0.0, l2=l1)


class TestBandSuperres:
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_dense_oracle(self, seed):
        rng = np.random.default_rng(200 + seed)
        nb, h, w = 2, 8, 8
        model = DegradationModel(blur=build_gaussian_blur(0.9, 3),
                                 decimation=Decimation(2, 2))
        y = rand_image(rng, nb, 4, 4)
        z = rand_image(rng, nb, h, w)
        weight = rng.uniform(0.2, 2.0, nb)
        mu = rng.uniform(0.05, 1.0, nb)
        out = solve_band_superres(y, model, z, weight, mu)
        d = dense_spatial_matrix(model, h, w)
        for b in range(nb):
            a = weight[b] * d.T @ d + mu[b] * np.eye(h * w)
            rhs = weight[b] * d.T @ y.data[b] + mu[b] * z.data[b]
            np.testing.assert_allclose(out.data[b], np.linalg.solve(a, rhs),
                                       rtol=1e-6, atol=1e-9)

    def test_no_spatial_reduces_to_blend(self):
        rng = np.random.default_rng(3)
        y = rand_image(rng, 2, 3, 3)
        z = rand_image(rng, 2, 3, 3)
        out = solve_band_superres(y, DegradationModel(), z, 3.0, 1.0)
        np.testing.assert_allclose(out.data, (3.0 * y.data + z.data) / 4.0)

    def test_underdetermined_without_proximity(self):
        rng = np.random.default_rng(4)
        model = DegradationModel(blur=build_gaussian_blur(0.5, 3),
                                 decimation=Decimation(2, 2))
        y = rand_image(rng, 1, 2, 2)
        z = rand_image(rng, 1, 4, 4)
        with pytest.raises(ValueError, match="underdetermined"):
            solve_band_superres(y, model, z, 1.0, 0.0)


class TestSylvester:
    @pytest.mark.parametrize("seed", range(20))
    def test_general_solve_matches_kron_oracle(self, seed):
        rng = np.random.default_rng(300 + seed)
        nb, h, w = 3, 6, 6
        model = DegradationModel(blur=build_gaussian_blur(0.8, 3),
                                 decimation=Decimation(2, 2))
        wts = rng.uniform(0.2, 2.0, nb)
        m = rng.normal(size=(nb, nb))
        m = m @ m.T + 0.5 * np.eye(nb)
        g = rng.normal(size=(nb, h * w))
        x = solve_sylvester_general(g, wts, m, model, h, w)
        d = dense_spatial_matrix(model, h, w)
        k = d.T @ d
        a = np.kron(np.diag(wts), k) + np.kron(m, np.eye(h * w))
        np.testing.assert_allclose(x.ravel(), np.linalg.solve(a, g.ravel()),
                                   rtol=1e-6, atol=1e-9)

    def test_rank_deficient_raises(self):
        model = DegradationModel()
        with pytest.raises(ValueError, match="lam > 0"):
            solve_sylvester_general(np.zeros((2, 4)), np.ones(2),
                                    np.zeros((2, 2)), model, 2, 2)

    @pytest.mark.parametrize("seed", range(20))
    def test_fusion_matches_dense_oracle(self, seed):
        rng = np.random.default_rng(400 + seed)
        nb, h, w = 4, 8, 8
        m1 = DegradationModel(blur=build_gaussian_blur(0.9, 3),
                              decimation=Decimation(2, 2))
        m2 = DegradationModel(
            spectral=build_band_averaging([[0, 1], [2, 3]], nb))
        y1 = rand_image(rng, nb, 4, 4)
        y2 = rand_image(rng, 2, h, w)
        xbar = rand_image(rng, nb, h, w)
        n1, n2 = rand_noise(rng, nb), rand_noise(rng, 2)
        lam = float(rng.uniform(0.01, 1.0))
        out = solve_sylvester_fusion(y1, m1, y2, m2, xbar, n1, n2, lam)
        x = solve_dense_fusion(
            dense_forward_matrix(m1, nb, h, w),
            band_weight_diag(n1.inverse_variances(), 16), y1.data.ravel(),
            dense_forward_matrix(m2, nb, h, w),
            band_weight_diag(n2.inverse_variances(), h * w), y2.data.ravel(),
            lam, xbar.data.ravel())
        np.testing.assert_allclose(out.data.ravel(), x, rtol=1e-6, atol=1e-9)


class TestForwardBackward:
    def objective(self, dy, l, iv, gamma, img):
        r = dy.data - l @ img.data
        return float(np.sum(iv[:, None] * r ** 2)) + gamma * l21_norm(img)

    def test_objective_non_increasing_iterationwise(self):
        rng = np.random.default_rng(5)
        resp = build_band_averaging([[0, 1], [2, 3]], 4)
        dy = rand_image(rng, 2, 4, 4)
        noise = rand_noise(rng, 2)
        init = rand_image(rng, 4, 4, 4)
        iv = noise.inverse_variances()
        prev = None
        for k in range(1, 15):
            out = forward_backward_l21(
                dy, resp, noise, 0.7,
                SolverOptions(max_iters=k, tol=1e-15), init)
            cur = self.objective(dy, resp.matrix, iv, 0.7, out)
            if prev is not None:
                assert cur <= prev + 1e-10
            prev = cur

    def test_huge_gamma_gives_zero(self):
        rng = np.random.default_rng(6)
        resp = build_band_averaging([[0], [1]], 2)
        dy = rand_image(rng, 2, 3, 3)
        noise = NoiseModel.isotropic(1.0, 2)
        init = rand_image(rng, 2, 3, 3)
        out = forward_backward_l21(dy, resp, noise, 1e6,
                                   SolverOptions(max_iters=200, tol=1e-12),
                                   init)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-8)


class TestAdmmEngine:
    def test_degenerate_single_block_consensus(self):
        # min ||x - a||^2 + ||u - b||^2 with u = x: closed form (a + b) / 2
        a = np.array([[1.0, 3.0]])
        b = np.array([[3.0, 5.0]])
        mu = 2.0

        plan = AdmmPlan(
            x0=np.zeros_like(a),
            blocks=[AdmmBlock(
                name="copy",
                split=lambda x: x,
                split_adjoint=lambda u: u,
                update=lambda t: (2.0 * b + mu * t) / (2.0 + mu),
            )],
            x_update=lambda cs: (2.0 * a + mu * cs[0]) / (2.0 + mu),
            objective=lambda x: float(np.sum((x - a) ** 2 + (x - b) ** 2)),
        )
        x, diag = admm_minimize(plan, SolverOptions(max_iters=500, tol=1e-10,
                                                    mu=mu))
        assert diag.converged
        assert diag.primal_residual < 1e-6 and diag.dual_residual < 1e-6
        np.testing.assert_allclose(x, (a + b) / 2.0, atol=1e-6)

    def test_no_blocks_converges_immediately(self):
        plan = AdmmPlan(x0=np.ones((1, 2)), blocks=[],
                        x_update=lambda cs: np.ones((1, 2)))
        x, diag = admm_minimize(plan, SolverOptions())
        assert diag.converged and diag.iterations <= 1
