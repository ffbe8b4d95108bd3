import numpy as np
import pytest

from gppca import epca
from gppca import gaussian_geometry as gg
from gppca.epca import FitOptions, Subspace, ValidityError
from gppca.gaussian_geometry import (
    MomentGaussian,
    expectation_to_moment,
    kl_divergence,
    moment_to_expectation,
    moment_to_natural,
    natural_to_expectation,
    natural_to_moment,
)
from helpers import planted_subspace, random_gaussian


def _nat_point(mu, sigma):
    return gg.pack_natural(moment_to_natural(MomentGaussian(mu, sigma)))


def _exp_point(mu, sigma):
    return gg.pack_expectation(moment_to_expectation(MomentGaussian(mu, sigma)))


class TestReconstruct:
    def test_zero_weights_returns_offset(self):
        rng = np.random.default_rng(0)
        pts, u0, basis, _ = planted_subspace(rng, 2, 2, 4)
        s = Subspace(u0=u0, basis=basis)
        np.testing.assert_array_equal(epca.reconstruct(np.zeros(2), s), u0)

    def test_single_basis_vector(self):
        rng = np.random.default_rng(1)
        _, u0, basis, _ = planted_subspace(rng, 2, 1, 3)
        s = Subspace(u0=u0, basis=basis)
        np.testing.assert_allclose(epca.reconstruct([1.0], s), u0 + basis[0])

    def test_affine_in_weights(self):
        rng = np.random.default_rng(2)
        _, u0, basis, _ = planted_subspace(rng, 3, 2, 3)
        s = Subspace(u0=u0, basis=basis)
        w1, w2 = rng.normal(size=2), rng.normal(size=2)
        mid = epca.reconstruct(0.5 * w1 + 0.5 * w2, s)
        np.testing.assert_allclose(
            mid, 0.5 * epca.reconstruct(w1, s) + 0.5 * epca.reconstruct(w2, s)
        )


class TestObjective:
    def test_planted_zero(self):
        rng = np.random.default_rng(3)
        pts, u0, basis, weights = planted_subspace(rng, 3, 2, 6)
        s = Subspace(u0=u0, basis=basis)
        assert epca.objective(weights, s, pts) == pytest.approx(0.0, abs=1e-10)

    def test_single_point_offset_only(self):
        rng = np.random.default_rng(4)
        pts, u0, _, _ = planted_subspace(rng, 2, 0, 1)
        s = Subspace(u0=u0, basis=np.zeros((0, u0.shape[0])))
        assert epca.objective(np.zeros((1, 0)), s, pts[:1]) == pytest.approx(0.0, abs=1e-12)

    def test_two_univariate_gaussians_offset_midpoint(self):
        # E = KL[N(0,1)||N(.5,1)] + KL[N(1,1)||N(.5,1)] = 0.125 + 0.125
        pts = np.array([_nat_point([0.0], [[1.0]]), _nat_point([1.0], [[1.0]])])
        u0 = _nat_point([0.5], [[1.0]])
        s = Subspace(u0=u0, basis=np.zeros((0, 2)))
        assert epca.objective(np.zeros((2, 0)), s, pts) == pytest.approx(0.25, abs=1e-12)

    def test_invalid_reconstruction_names_task(self):
        pts = np.array([_nat_point([0.0], [[1.0]]), _nat_point([0.5], [[1.0]])])
        bad = pts[0].copy()
        bad[1] = 1.0  # positive Theta block
        s = Subspace(u0=bad, basis=np.zeros((0, 2)))
        with pytest.raises(ValidityError) as err:
            epca.objective(np.zeros((2, 0)), s, pts)
        assert err.value.task_index == 0


class TestGradients:
    def test_zero_at_optimum(self):
        rng = np.random.default_rng(5)
        pts, u0, basis, weights = planted_subspace(rng, 2, 1, 4)
        s = Subspace(u0=u0, basis=basis)
        d_w, d_u = epca.gradients(weights, s, pts)
        assert np.max(np.abs(d_w)) < 1e-8
        assert np.max(np.abs(d_u)) < 1e-8

    def test_finite_difference_match(self):
        rng = np.random.default_rng(6)
        d, latent, count = 2, 1, 3
        pts = np.array([_nat_point(rng.normal(size=d) * 0.4, np.eye(d) * (1 + 0.3 * rng.random()))
                        for _ in range(count)])
        _, u0, basis, _ = planted_subspace(rng, d, latent, count)
        weights = 0.1 * rng.normal(size=(count, latent))
        s = Subspace(u0=u0, basis=basis)
        d_w, d_u = epca.gradients(weights, s, pts)
        h = 1e-6

        def obj(w, u0_, basis_):
            return epca.objective(w, Subspace(u0=u0_, basis=basis_), pts)

        for i in range(count):
            for l in range(latent):
                wp, wm = weights.copy(), weights.copy()
                wp[i, l] += h
                wm[i, l] -= h
                fd = (obj(wp, u0, basis) - obj(wm, u0, basis)) / (2 * h)
                assert d_w[i, l] == pytest.approx(fd, rel=1e-4, abs=1e-7)
        flat_dim = u0.shape[0]
        for j in rng.choice(flat_dim, 5, replace=False):
            up, um = u0.copy(), u0.copy()
            up[j] += h
            um[j] -= h
            fd = (obj(weights, up, basis) - obj(weights, um, basis)) / (2 * h)
            assert d_u[0, j] == pytest.approx(fd, rel=1e-4, abs=1e-7)
            bp, bm = basis.copy(), basis.copy()
            bp[0, j] += h
            bm[0, j] -= h
            fd = (obj(weights, u0, bp) - obj(weights, u0, bm)) / (2 * h)
            assert d_u[1, j] == pytest.approx(fd, rel=1e-4, abs=1e-7)

    def test_residual_scaling_doubles_weight_gradient(self):
        # data whose dual-chart residual is doubled doubles dW
        rng = np.random.default_rng(7)
        d = 2
        _, u0, basis, _ = planted_subspace(rng, d, 1, 2)
        s = Subspace(u0=u0, basis=basis)
        weights = np.zeros((1, 1))
        recon_dual = gg.pack_expectation(
            natural_to_expectation(gg.unpack_natural(u0, d))
        )
        step = np.zeros_like(recon_dual)
        step[0] = 0.05  # small mean perturbation in the dual chart
        data1 = gg.pack_natural(
            moment_to_natural(expectation_to_moment(gg.unpack_expectation(recon_dual + step, d)))
        )
        data2 = gg.pack_natural(
            moment_to_natural(expectation_to_moment(gg.unpack_expectation(recon_dual + 2 * step, d)))
        )
        g1, _ = epca.gradients(weights, s, data1[None, :])
        g2, _ = epca.gradients(weights, s, data2[None, :])
        np.testing.assert_allclose(g2, 2.0 * g1, rtol=1e-9, atol=1e-12)

    def test_m_mode_finite_difference(self):
        # dual engine: reconstructions in the expectation chart
        rng = np.random.default_rng(8)
        pts = np.array([_exp_point([rng.normal() * 0.5], [[1.0 + 0.4 * rng.random()]])
                        for _ in range(3)])
        u0 = pts.mean(axis=0)
        basis = 0.05 * rng.normal(size=(1, 2))
        s = Subspace(u0=u0, basis=basis, mode="m_flat")
        weights = 0.1 * rng.normal(size=(3, 1))
        d_w, d_u = epca.gradients(weights, s, pts)
        h = 1e-6
        for i in range(3):
            wp, wm = weights.copy(), weights.copy()
            wp[i, 0] += h
            wm[i, 0] -= h
            fd = (epca.objective(wp, s, pts) - epca.objective(wm, s, pts)) / (2 * h)
            assert d_w[i, 0] == pytest.approx(fd, rel=1e-4, abs=1e-7)
        for j in range(2):
            up, um = u0.copy(), u0.copy()
            up[j] += h
            um[j] -= h
            fd = (
                epca.objective(weights, Subspace(up, basis, "m_flat"), pts)
                - epca.objective(weights, Subspace(um, basis, "m_flat"), pts)
            ) / (2 * h)
            assert d_u[0, j] == pytest.approx(fd, rel=1e-4, abs=1e-7)


class TestProjectPoint:
    def test_recovers_planted_weights(self):
        rng = np.random.default_rng(9)
        pts, u0, basis, weights = planted_subspace(rng, 2, 2, 5)
        s = Subspace(u0=u0, basis=basis)
        w = epca.project_point(pts[2], s, FitOptions(rel_tol=1e-10))
        np.testing.assert_allclose(w, weights[2], atol=1e-6)

    def test_empty_subspace(self):
        rng = np.random.default_rng(10)
        pts, u0, _, _ = planted_subspace(rng, 2, 0, 1)
        s = Subspace(u0=u0, basis=np.zeros((0, u0.shape[0])))
        assert epca.project_point(pts[0], s).shape == (0,)

    def test_matches_grid_search(self):
        # brute-force scan over the single weight
        rng = np.random.default_rng(11)
        d = 2
        _, u0, basis, _ = planted_subspace(rng, d, 1, 3)
        s = Subspace(u0=u0, basis=basis)
        target = _nat_point(rng.normal(size=d) * 0.3, np.eye(d) * 1.2)
        w = epca.project_point(target, s, FitOptions(rel_tol=1e-10))
        grid = np.arange(-2.0, 2.0, 1e-3)
        best, best_val = None, np.inf
        for v in grid:
            try:
                val = epca.objective(np.array([[v]]), s, target[None, :])
            except ValidityError:
                continue
            if val < best_val:
                best, best_val = v, val
        assert abs(w[0] - best) <= 2e-3

    def test_projection_idempotent_on_subspace(self):
        rng = np.random.default_rng(12)
        _, u0, basis, _ = planted_subspace(rng, 3, 2, 4)
        s = Subspace(u0=u0, basis=basis)
        w_true = np.array([0.4, -0.7])
        point = epca.reconstruct(w_true, s)
        w = epca.project_point(point, s, FitOptions(rel_tol=1e-10))
        np.testing.assert_allclose(w, w_true, atol=1e-6)


class TestFit:
    def test_identical_points(self):
        rng = np.random.default_rng(13)
        pts, *_ = planted_subspace(rng, 2, 0, 1)
        same = np.tile(pts[0], (5, 1))
        res = epca.fit(same, 0)
        assert res.objective == pytest.approx(0.0, abs=1e-10)
        np.testing.assert_allclose(res.subspace.u0, pts[0], rtol=1e-6, atol=1e-8)

    def test_planted_recovery(self):
        rng = np.random.default_rng(14)
        pts, _, _, _ = planted_subspace(rng, 3, 2, 8)
        res = epca.fit(pts, 2, FitOptions(max_iters=10_000, rel_tol=1e-12))
        assert res.objective < 1e-6
        # reconstructions match the planted points in the dual chart
        d = 3
        for w, p in zip(res.weights, pts):
            rec = epca.reconstruct(w, res.subspace)
            zr = gg.pack_expectation(natural_to_expectation(gg.unpack_natural(rec, d)))
            zp = gg.pack_expectation(natural_to_expectation(gg.unpack_natural(p, d)))
            assert np.max(np.abs(zr - zp)) < 1e-4

    def test_full_span(self):
        # latent_dim = I - 1 interpolates generic points exactly
        rng = np.random.default_rng(15)
        pts = np.array([_nat_point(rng.normal(size=2) * 0.5,
                                   np.eye(2) + 0.3 * np.outer(v := rng.normal(size=2), v))
                        for _ in range(3)])
        res = epca.fit(pts, 2, FitOptions(rel_tol=1e-13))
        assert res.objective < 1e-6

    def test_monotone_history(self):
        rng = np.random.default_rng(16)
        pts, *_ = planted_subspace(rng, 3, 2, 10)
        noisy = pts + 0.01 * rng.normal(size=pts.shape)
        # re-symmetrize matrix blocks so points stay valid
        fixed = []
        for p in noisy:
            nat = gg.unpack_natural(p, 3)
            fixed.append(gg.pack_natural(nat))
        res = epca.fit(np.asarray(fixed), 2, FitOptions(rel_tol=1e-12))
        assert np.all(np.diff(res.history) <= 0)

    def test_rejects_bad_latent_dim(self):
        rng = np.random.default_rng(17)
        pts, *_ = planted_subspace(rng, 2, 1, 3)
        with pytest.raises(ValueError):
            epca.fit(pts, 3)
        with pytest.raises(ValueError):
            epca.fit(pts[:1], 1)

    def test_single_point_offset_fit(self):
        rng = np.random.default_rng(18)
        pts, *_ = planted_subspace(rng, 2, 0, 1)
        res = epca.fit(pts[:1], 0)
        assert res.objective == pytest.approx(0.0, abs=1e-10)

    def test_reported_basis_unit_norm(self):
        rng = np.random.default_rng(19)
        pts, *_ = planted_subspace(rng, 2, 1, 5)
        res = epca.fit(pts, 1, FitOptions(rel_tol=1e-12))
        np.testing.assert_allclose(np.linalg.norm(res.subspace.basis, axis=1), 1.0, rtol=1e-12)

    def test_final_objective_recomputable(self):
        rng = np.random.default_rng(20)
        pts, *_ = planted_subspace(rng, 2, 1, 4)
        res = epca.fit(pts, 1)
        again = epca.objective(res.weights, res.subspace, pts)
        assert again == res.objective  # bitwise: same code path, same inputs


class TestDuality:
    def test_m_pca_mirrors_e_pca(self):
        """Fitting the dual chart equals fitting the primal chart with roles swapped.

        For d=1 Gaussians, an m_flat fit on expectation points and an e_flat
        fit on the same Gaussians seen through swapped conversions minimize
        the same divergences with arguments transposed; both must reach the
        same optimum on a planted instance (exactly representable data).
        """
        rng = np.random.default_rng(21)
        gaussians = [MomentGaussian([rng.normal() * 0.5], [[1.0 + 0.5 * rng.random()]])
                     for _ in range(3)]
        e_pts = np.array([gg.pack_natural(moment_to_natural(g)) for g in gaussians])
        m_pts = np.array([gg.pack_expectation(moment_to_expectation(g)) for g in gaussians])
        res_e = epca.fit(e_pts, 2, FitOptions(rel_tol=1e-13))
        res_m = epca.fit(m_pts, 2, FitOptions(rel_tol=1e-13), mode="m_flat")
        # full span: both charts interpolate exactly, objectives vanish
        assert res_e.objective < 1e-8
        assert res_m.objective < 1e-8

    def test_m_mode_monotone(self):
        rng = np.random.default_rng(22)
        m_pts = np.array([_exp_point([rng.normal() * 0.4], [[1.0 + 0.5 * rng.random()]])
                          for _ in range(4)])
        res = epca.fit(m_pts, 1, FitOptions(rel_tol=1e-12), mode="m_flat")
        assert np.all(np.diff(res.history) <= 0)
        assert res.objective >= -1e-12
