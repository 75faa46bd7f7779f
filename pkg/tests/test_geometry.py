import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_ellipsoid
from oracles import (
    intersect_oracle,
    mvee_oracle_volume,
    quadratic_form,
    random_rotation,
    surface_points,
)

from aegis.errors import DegenerateInput
from aegis.geometry import (
    Ellipsoid,
    ellipsoid_from_record,
    ellipsoid_to_record,
    ellipsoids_intersect,
    fit_mvee,
    load_cloud_bin,
    load_cloud_text,
    load_ellipsoid,
    quadratic_matrix,
    save_cloud_bin,
    save_cloud_text,
    save_ellipsoid,
    shape_matrix,
    validate_sym_mat3,
)

CROSS_POLYTOPE = np.array([
    [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
], dtype=np.float64)


def rot_z(deg):
    a = math.radians(deg)
    return np.array([
        [math.cos(a), -math.sin(a), 0.0],
        [math.sin(a), math.cos(a), 0.0],
        [0.0, 0.0, 1.0],
    ])


class TestEllipsoidType:
    def test_rejects_nonpositive_axes(self):
        with pytest.raises(ValueError):
            Ellipsoid((0, 0, 0), (1.0, 0.0, 1.0))

    def test_rejects_non_orthonormal_rotation(self):
        bad = np.eye(3)
        bad[0, 1] = 1e-3
        with pytest.raises(ValueError):
            Ellipsoid((0, 0, 0), (1, 1, 1), bad)

    def test_rejects_reflection(self):
        refl = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            Ellipsoid((0, 0, 0), (1, 1, 1), refl)

    def test_fields_are_immutable(self):
        e = Ellipsoid((0, 0, 0), (1, 2, 3))
        with pytest.raises(ValueError):
            e.center[0] = 5.0


class TestShapeMatrices:
    def test_unit_sphere_is_identity(self):
        e = Ellipsoid((0, 0, 0), (1, 1, 1))
        np.testing.assert_allclose(shape_matrix(e), np.eye(3), atol=1e-15)
        np.testing.assert_allclose(quadratic_matrix(e), np.eye(3), atol=1e-15)

    def test_reported_ee_axes_diagonal(self):
        e = Ellipsoid((0, 0, 0), (0.06, 0.12, 0.11))
        np.testing.assert_allclose(shape_matrix(e), np.diag([0.06, 0.12, 0.11]), atol=1e-15)

    def test_axis_permutation_under_rotation(self):
        e = Ellipsoid((0, 0, 0), (2, 1, 1), rot_z(90))
        np.testing.assert_allclose(shape_matrix(e), np.diag([1, 2, 1]), atol=1e-12)

    def test_quadratic_scalar_inverse_square(self):
        e = Ellipsoid((0, 0, 0), (2, 2, 2))
        np.testing.assert_allclose(quadratic_matrix(e), np.diag([0.25, 0.25, 0.25]), atol=1e-15)

    def test_mutual_inverse_square_random(self, rng):
        for _ in range(25):
            e = random_ellipsoid(rng)
            s = shape_matrix(e)
            m = quadratic_matrix(e)
            np.testing.assert_allclose(m @ s @ s, np.eye(3), atol=1e-9)
            validate_sym_mat3(s, sym_tol=1e-12)
            validate_sym_mat3(m, sym_tol=1e-9 / np.min(e.semi_axes) ** 2)

    def test_eigenvalues_are_semi_axes(self, rng):
        e = random_ellipsoid(rng)
        np.testing.assert_allclose(
            np.sort(np.linalg.eigvalsh(shape_matrix(e))),
            np.sort(e.semi_axes),
            atol=1e-12,
        )


class TestFitMvee:
    def test_cross_polytope_gives_unit_ball(self):
        e = fit_mvee(CROSS_POLYTOPE, 1e-9)
        np.testing.assert_allclose(e.center, 0.0, atol=1e-6)
        np.testing.assert_allclose(e.semi_axes, 1.0, atol=1e-6)

    def test_known_ellipsoid_recovery_vs_oracle(self, rng):
        true = Ellipsoid((0.2, -0.1, 0.4), (0.15, 0.09, 0.05), random_rotation(rng))
        inside = rng.normal(size=(50, 3))
        inside /= np.maximum(1.0, np.linalg.norm(inside, axis=1))[:, None]
        pts_inside = true.center + (inside * true.semi_axes) @ true.rotation.T
        endpoints = np.vstack([
            true.center + true.rotation[:, i] * s * true.semi_axes[i]
            for i in range(3) for s in (+1.0, -1.0)
        ])
        pts = np.vstack([pts_inside, endpoints])
        fitted = fit_mvee(pts, 1e-7)
        m = quadratic_matrix(fitted)
        res = np.einsum("ij,jk,ik->i", pts - fitted.center, m, pts - fitted.center)
        assert res.max() <= 1.0 + 1e-7
        assert fitted.volume <= mvee_oracle_volume(pts, 1e-9) * 1.01
        assert fitted.volume >= mvee_oracle_volume(pts, 1e-9) * 0.99

    def test_containment_invariant_random(self, rng):
        for _ in range(10):
            pts = rng.normal(size=(rng.integers(5, 80), 3)) * rng.uniform(0.05, 2.0)
            e = fit_mvee(pts, 1e-7)
            res = quadratic_form(e.center, e.semi_axes, e.rotation, pts)
            assert res.max() <= 1.0 + 1e-7

    def test_monotonicity_interior_point(self, rng):
        pts = rng.normal(size=(40, 3))
        e1 = fit_mvee(pts, 1e-9)
        interior = e1.center + 0.3 * (pts[0] - e1.center)
        e2 = fit_mvee(np.vstack([pts, interior]), 1e-9)
        np.testing.assert_allclose(e1.center, e2.center, atol=1e-5)
        np.testing.assert_allclose(e1.semi_axes, e2.semi_axes, atol=1e-5)

    def test_rotation_equivariance(self, rng):
        pts = rng.normal(size=(30, 3)) * np.array([0.5, 0.2, 0.1])
        r = random_rotation(rng)
        e = fit_mvee(pts, 1e-9)
        er = fit_mvee(pts @ r.T, 1e-9)
        np.testing.assert_allclose(er.center, r @ e.center, atol=1e-6)
        np.testing.assert_allclose(er.semi_axes, e.semi_axes, atol=1e-6)
        m = quadratic_matrix(e)
        mr = quadratic_matrix(er)
        np.testing.assert_allclose(mr, r @ m @ r.T, rtol=1e-5, atol=1e-6)

    def test_coplanar_with_inflation_hits_floor(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=np.float64)
        e = fit_mvee(pts, 1e-7, inflate=True, floor=0.005)
        assert math.isclose(float(e.semi_axes.min()), 0.005, rel_tol=1e-9)
        res = quadratic_form(e.center, e.semi_axes, e.rotation, pts)
        assert res.max() <= 1.0 + 1e-6

    def test_coplanar_without_inflation_raises(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=np.float64)
        with pytest.raises(DegenerateInput):
            fit_mvee(pts, 1e-7, inflate=False)

    def test_collinear_and_single_point_inflation(self):
        line = np.array([[0, 0, 0], [0.1, 0, 0], [0.2, 0, 0]], dtype=np.float64)
        e = fit_mvee(line, 1e-7, inflate=True)
        assert np.all(e.semi_axes >= 0.005 - 1e-12)
        res = quadratic_form(e.center, e.semi_axes, e.rotation, line)
        assert res.max() <= 1.0 + 1e-6
        single = fit_mvee(np.zeros((1, 3)), 1e-7, inflate=True)
        np.testing.assert_allclose(single.semi_axes, 0.005)

    def test_empty_raises(self):
        with pytest.raises(DegenerateInput):
            fit_mvee(np.zeros((0, 3)), 1e-7)

    def test_axes_sorted_descending(self, rng):
        pts = rng.normal(size=(25, 3)) * np.array([1.0, 0.3, 0.1])
        e = fit_mvee(pts, 1e-7)
        assert e.semi_axes[0] >= e.semi_axes[1] >= e.semi_axes[2]


class TestIntersection:
    def test_far_spheres_disjoint(self):
        a = Ellipsoid((0, 0, 0), (1, 1, 1))
        b = Ellipsoid((3, 0, 0), (1, 1, 1))
        assert ellipsoids_intersect(a, b) is False

    def test_tangent_spheres_intersect(self):
        a = Ellipsoid((0, 0, 0), (1, 1, 1))
        b = Ellipsoid((2, 0, 0), (1, 1, 1))
        assert ellipsoids_intersect(a, b) is True

    def test_containment_counts(self):
        outer = Ellipsoid((0, 0, 0), (2, 2, 2))
        inner = Ellipsoid((0.1, 0, 0), (0.2, 0.3, 0.1))
        assert ellipsoids_intersect(outer, inner) is True
        assert ellipsoids_intersect(inner, outer) is True

    def test_constructed_separated_pairs_vs_sampling_oracle(self, rng):
        for _ in range(40):
            a = random_ellipsoid(rng)
            b_axes = rng.uniform(0.03, 0.15, 3)
            b_rot = random_rotation(rng)
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            gap = rng.uniform(1e-3, 0.2)
            # support of each body along d places them exactly `gap` apart
            supp_a = np.linalg.norm(a.semi_axes * (a.rotation.T @ d))
            supp_b = np.linalg.norm(b_axes * (b_rot.T @ d))
            b = Ellipsoid(a.center + d * (supp_a + supp_b + gap), b_axes, b_rot)
            got = ellipsoids_intersect(a, b)
            assert got is False
            assert got == intersect_oracle(a, b, n=20_000)

    def test_constructed_overlapping_pairs_vs_sampling_oracle(self, rng):
        for _ in range(40):
            a = random_ellipsoid(rng)
            b_axes = rng.uniform(0.03, 0.15, 3)
            b_rot = random_rotation(rng)
            u = rng.normal(size=3)
            u /= np.linalg.norm(u)
            x_on_a = a.center + (a.rotation * a.semi_axes) @ u  # a surface point
            s = rng.normal(size=3)
            s *= rng.uniform(0.0, 0.8) / np.linalg.norm(s)
            y_in_b = (b_rot * b_axes) @ s  # interior offset from b's center
            b = Ellipsoid(x_on_a - y_in_b, b_axes, b_rot)
            got = ellipsoids_intersect(a, b)
            assert got is True
            assert got == intersect_oracle(a, b, n=20_000)

    def test_symmetry(self, rng):
        for _ in range(30):
            a = random_ellipsoid(rng)
            b = random_ellipsoid(rng)
            assert ellipsoids_intersect(a, b) == ellipsoids_intersect(b, a)


class TestSerialization:
    def test_record_round_trip(self, rng):
        e = random_ellipsoid(rng)
        rec = ellipsoid_to_record(e)
        assert rec.shape == (15,)
        back = ellipsoid_from_record(rec)
        np.testing.assert_array_equal(back.center, e.center)
        np.testing.assert_array_equal(back.semi_axes, e.semi_axes)
        np.testing.assert_array_equal(back.rotation, e.rotation)

    def test_file_round_trip(self, rng, tmp_path):
        e = random_ellipsoid(rng)
        save_ellipsoid(tmp_path / "e.ell", e)
        back = load_ellipsoid(tmp_path / "e.ell")
        np.testing.assert_array_equal(back.center, e.center)
        np.testing.assert_array_equal(back.rotation, e.rotation)

    def test_cloud_text_round_trip(self, rng, tmp_path):
        pts = rng.normal(size=(17, 3))
        save_cloud_text(tmp_path / "c.xyz", pts)
        back = load_cloud_text(tmp_path / "c.xyz")
        np.testing.assert_array_equal(back, pts)

    def test_cloud_binary_round_trip(self, rng, tmp_path):
        pts = rng.normal(size=(17, 3)).astype(np.float32).astype(np.float64)
        save_cloud_bin(tmp_path / "c.bin", pts)
        back = load_cloud_bin(tmp_path / "c.bin")
        np.testing.assert_array_equal(back, pts)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_surface_samples_inside_fitted_mvee(seed):
    rng = np.random.default_rng(seed)
    e = random_ellipsoid(rng)
    pts = surface_points(e.center, e.semi_axes, e.rotation, 64)
    fitted = fit_mvee(pts, 1e-7)
    res = quadratic_form(fitted.center, fitted.semi_axes, fitted.rotation, pts)
    assert res.max() <= 1.0 + 1e-7
