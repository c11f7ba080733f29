import numpy as np
import pytest
from scipy.spatial.distance import cdist

import surfshape as ss
from conftest import random_rotation, sphere_mesh


def closed_form_oracle(x, y):
    """Bending-energy-matrix route: Be = S^-1 - S^-1 Q (Q^T S^-1 Q)^-1 Q^T S^-1."""
    s = -cdist(x, x) / (8.0 * np.pi)
    q = np.hstack([np.ones((len(x), 1)), x])
    s_inv = np.linalg.inv(s)
    middle = np.linalg.inv(q.T @ s_inv @ q)
    be = s_inv - s_inv @ q @ middle @ q.T @ s_inv
    beta1 = be @ y
    beta2 = middle @ q.T @ s_inv @ y
    energy = np.trace(y.T @ be @ y)
    return be, beta1, beta2, energy


def random_points(seed, n=20, scale=1.0):
    rng = np.random.default_rng(seed)
    return scale * rng.standard_normal((n, 3))


class TestFitTps:
    def test_identity_warp(self):
        x = random_points(0)
        field = ss.fit_tps(x, x)
        np.testing.assert_allclose(field.beta1, 0.0, atol=1e-10)
        expected_affine = np.vstack([np.zeros(3), np.eye(3)])
        np.testing.assert_allclose(field.beta2, expected_affine, atol=1e-9)
        assert field.bending_energy == pytest.approx(0.0, abs=1e-10)

    def test_affine_targets_have_zero_bending(self):
        rng = np.random.default_rng(1)
        x = random_points(2)
        m = rng.standard_normal((3, 3))
        t = rng.standard_normal(3)
        field = ss.fit_tps(x, x @ m + t)
        np.testing.assert_allclose(field.beta1, 0.0, atol=1e-10)
        assert field.bending_energy == pytest.approx(0.0, abs=1e-10)
        np.testing.assert_allclose(field.beta2[0], t, atol=1e-8)
        np.testing.assert_allclose(field.beta2[1:], m, atol=1e-8)

    def test_interpolates_control_points(self):
        x = random_points(3)
        y = random_points(4)
        field = ss.fit_tps(x, y)
        np.testing.assert_allclose(ss.apply_warp(field, x), y, atol=1e-8)

    def test_matches_closed_form_oracle(self):
        x = random_points(5)
        y = random_points(6)
        field = ss.fit_tps(x, y)
        _, beta1, beta2, energy = closed_form_oracle(x, y)
        np.testing.assert_allclose(field.beta1, beta1, atol=1e-8)
        np.testing.assert_allclose(field.beta2, beta2, atol=1e-8)
        assert field.bending_energy == pytest.approx(energy, abs=1e-8)

    @pytest.mark.parametrize("j", [5, 12, 50])
    def test_oracle_equivalence_across_sizes(self, j):
        x = random_points(10 + j, n=j)
        y = random_points(20 + j, n=j)
        field = ss.fit_tps(x, y)
        _, beta1, _, energy = closed_form_oracle(x, y)
        np.testing.assert_allclose(field.beta1, beta1, atol=1e-8)
        assert field.bending_energy == pytest.approx(energy, abs=1e-8)

    def test_side_conditions(self):
        x = random_points(7)
        y = random_points(8)
        field = ss.fit_tps(x, y)
        np.testing.assert_allclose(field.beta1.sum(axis=0), 0.0, atol=1e-8)
        np.testing.assert_allclose(x.T @ field.beta1, 0.0, atol=1e-8)

    def test_bending_energy_nonnegative_and_zero_iff_affine(self):
        x = random_points(9)
        bent = ss.fit_tps(x, random_points(11))
        assert bent.bending_energy > 0
        assert np.abs(bent.beta1).max() > 1e-6
        assert np.all(bent.bending_energy_by_coordinate >= 0)
        assert bent.bending_energy == pytest.approx(bent.bending_energy_by_coordinate.sum())

    def test_translation_equivariance(self):
        x = random_points(12)
        y = random_points(13)
        queries = random_points(14, n=7)
        shift = np.array([3.0, -2.0, 0.5])
        base = ss.apply_warp(ss.fit_tps(x, y), queries)
        shifted = ss.apply_warp(ss.fit_tps(x + shift, y + shift), queries + shift)
        np.testing.assert_allclose(shifted, base + shift, atol=1e-8)

    def test_kernel_rescaling_gives_same_interpolant(self):
        # any positive multiple of the kernel yields the same warp
        x = random_points(15)
        y = random_points(16)
        queries = random_points(17, n=9)
        j = len(x)
        q = np.hstack([np.ones((j, 1)), x])
        for factor in (2.0, 0.25):
            s = factor * (-cdist(x, x) / (8 * np.pi))
            system = np.zeros((j + 4, j + 4))
            system[:j, :j] = s
            system[:j, j:] = q
            system[j:, :j] = q.T
            solution = np.linalg.solve(system, np.vstack([y, np.zeros((4, 3))]))
            kernel = factor * (-cdist(queries, x) / (8 * np.pi))
            rescaled = kernel @ solution[:j] + np.hstack([np.ones((9, 1)), queries]) @ solution[j:]
            np.testing.assert_allclose(rescaled, ss.apply_warp(ss.fit_tps(x, y), queries), atol=1e-8)

    def test_duplicate_points_rejected(self):
        x = random_points(18)
        x[3] = x[7]
        with pytest.raises(ValueError, match="duplicate"):
            ss.fit_tps(x, random_points(19))

    def test_coplanar_points_rejected(self):
        rng = np.random.default_rng(20)
        x = rng.standard_normal((10, 3))
        x[:, 2] = 0.0
        with pytest.raises(ValueError, match="coplanar"):
            ss.fit_tps(x, random_points(21, n=10))

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError, match="at least 5"):
            ss.fit_tps(random_points(22, n=4), random_points(23, n=4))


class TestRadialBasis:
    def test_value_at_one(self):
        assert ss.radial_basis(1.0) == -1.0 / (8.0 * np.pi)

    def test_linear_in_distance(self):
        z = np.array([0.0, 2.0, 5.0])
        np.testing.assert_array_equal(ss.radial_basis(z), -z / (8 * np.pi))


class TestApplyWarp:
    def test_single_point_matches_batch(self):
        field = ss.fit_tps(random_points(24), random_points(25))
        queries = random_points(26, n=4)
        batch = ss.apply_warp(field, queries)
        for i, point in enumerate(queries):
            np.testing.assert_allclose(ss.apply_warp(field, point), batch[i], atol=1e-12)

    def test_affine_field_equals_direct_affine_map(self):
        rng = np.random.default_rng(27)
        x = random_points(28)
        m = rng.standard_normal((3, 3))
        t = rng.standard_normal(3)
        field = ss.fit_tps(x, x @ m + t)
        queries = random_points(29, n=30, scale=2.0)
        np.testing.assert_allclose(ss.apply_warp(field, queries), queries @ m + t, atol=1e-7)


class TestWarpTemplate:
    def test_identity_model_leaves_template(self):
        template = sphere_mesh(3)
        model_points = random_points(30, n=12, scale=1.2)
        warped = ss.warp_template(template, model_points, model_points)
        np.testing.assert_allclose(warped.vertices, template.vertices, atol=1e-9)
        np.testing.assert_array_equal(warped.triangles, template.triangles)

    def test_rigid_model_motion_moves_template_rigidly(self):
        template = sphere_mesh(3)
        rng = np.random.default_rng(31)
        model_points = random_points(32, n=15, scale=1.5)
        rotation = random_rotation(rng)
        shift = rng.normal(size=3)
        warped = ss.warp_template(template, model_points, model_points @ rotation + shift)
        np.testing.assert_allclose(warped.vertices, template.vertices @ rotation + shift, atol=1e-8)

    def test_model_points_land_on_target(self):
        rng = np.random.default_rng(33)
        template = sphere_mesh(3)
        model_source = template.vertices[rng.choice(template.n_vertices, 20, replace=False)]
        model_target = model_source + rng.normal(scale=0.1, size=model_source.shape)
        warped = ss.warp_template(template, model_source, model_target)
        field = ss.fit_tps(model_source, model_target)
        np.testing.assert_allclose(ss.apply_warp(field, model_source), model_target, atol=1e-8)
        assert set(warped.regions) == set(template.regions)
        for name in template.regions:
            np.testing.assert_array_equal(warped.regions[name], template.regions[name])
