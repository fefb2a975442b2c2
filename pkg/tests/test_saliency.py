"""Saliency maps: frozen analytic values plus structural properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from salpcc.errors import DataError
from salpcc.geometry import estimate_normals, knn_indices
from salpcc.saliency import (
    SaliencyBundle,
    compute_saliency,
    curvature_metric_c,
    curvature_saliency_s12,
    darboux_frame,
    depth_saliency,
    eigen_saliency_s11,
    extended_saliency,
    focus_saliency,
    geometric_saliency,
    minmax_normalize,
)
from salpcc.view import (
    classify_visible,
    default_camera,
    project,
    visibility_operator,
)


def fibonacci_sphere(n, radius=1.0):
    i = np.arange(n, dtype=np.float64)
    phi = np.pi * (3.0 - np.sqrt(5.0))
    y = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(1.0 - y * y)
    return radius * np.stack(
        [r * np.cos(phi * i), y, r * np.sin(phi * i)], axis=1
    )


def random_rotation(seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


class TestMinMax:
    def test_frozen_values(self):
        out = minmax_normalize([2.0, 4.0, 6.0])
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0])

    def test_constant_is_neutral(self):
        np.testing.assert_array_equal(
            minmax_normalize([3.0, 3.0, 3.0]), [0.5, 0.5, 0.5]
        )

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
    def test_range(self, vals):
        out = minmax_normalize(vals)
        assert (out >= 0.0).all() and (out <= 1.0).all()


class TestEigenSaliency:
    def test_flat_patch_value(self):
        # 26 aligned normals: spectrum (26, 0, 0), norm 26
        normals = np.tile(np.array([0.0, 0.0, 1.0]), (26, 1))
        nbr = np.array([[j for j in range(26) if j != i][:25]
                        for i in range(26)])
        s11 = eigen_saliency_s11(normals, nbr)
        np.testing.assert_allclose(s11, 1.0 / 26.0, rtol=1e-12)

    def test_spread_normals_score_higher(self):
        rng = np.random.default_rng(7)
        flat = np.tile(np.array([0.0, 0.0, 1.0]), (26, 1))
        spread = rng.normal(size=(26, 3))
        spread /= np.linalg.norm(spread, axis=1, keepdims=True)
        nbr = np.array([[j for j in range(26) if j != i][:25]
                        for i in range(26)])
        assert eigen_saliency_s11(spread, nbr).mean() \
            > eigen_saliency_s11(flat, nbr).mean()

    def test_rotation_invariant(self):
        rng = np.random.default_rng(3)
        normals = rng.normal(size=(40, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        nbr = np.argsort(rng.random((40, 40)), axis=1)[:, :10]
        rot = random_rotation(11)
        base = eigen_saliency_s11(normals, nbr)
        turned = eigen_saliency_s11(normals @ rot.T, nbr)
        np.testing.assert_allclose(turned, base, rtol=1e-9)


class TestDarbouxFrame:
    def test_orthonormal(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            v_i = rng.normal(size=3)
            v_j = rng.normal(size=3)
            n_i = rng.normal(size=3)
            n_j = rng.normal(size=3)
            n_i /= np.linalg.norm(n_i)
            n_j /= np.linalg.norm(n_j)
            g1, g2, g3 = darboux_frame(v_i, v_j, n_i, n_j)
            gram = np.stack([g1, g2, g3]) @ np.stack([g1, g2, g3]).T
            np.testing.assert_allclose(gram, np.eye(3), atol=1e-9)

    def test_source_selection(self):
        # normal of the first point is along the connecting line: it wins
        v_i = np.zeros(3)
        v_j = np.array([1.0, 0.0, 0.0])
        n_i = np.array([1.0, 0.0, 0.0])
        n_j = np.array([0.0, 1.0, 0.0])
        g1, _, _ = darboux_frame(v_i, v_j, n_i, n_j)
        np.testing.assert_allclose(g1, n_i)
        g1_swapped, _, _ = darboux_frame(v_j, v_i, n_j, n_i)
        np.testing.assert_allclose(g1_swapped, n_i)

    def test_tie_goes_to_first(self):
        # symmetric configuration: both normals at 45 degrees to the line
        v_i = np.zeros(3)
        v_j = np.array([1.0, 0.0, 0.0])
        s = 1.0 / np.sqrt(2.0)
        n_i = np.array([s, s, 0.0])
        n_j = np.array([s, -s, 0.0])
        g1, _, _ = darboux_frame(v_i, v_j, n_i, n_j)
        np.testing.assert_allclose(g1, n_i)

    def test_degenerate_parallel(self):
        # normal parallel to the line: cross product vanishes, fallback kicks in
        v_i = np.zeros(3)
        v_j = np.array([1.0, 0.0, 0.0])
        n = np.array([1.0, 0.0, 0.0])
        g1, g2, g3 = darboux_frame(v_i, v_j, n, n)
        gram = np.stack([g1, g2, g3]) @ np.stack([g1, g2, g3]).T
        np.testing.assert_allclose(gram, np.eye(3), atol=1e-12)

    def test_identical_points_rejected(self):
        with pytest.raises(DataError):
            darboux_frame(np.zeros(3), np.zeros(3),
                          np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, 1.0]))


class TestCurvatureMetric:
    def test_rank_one_value(self):
        # all pair frames identical: each G_j G_j^T has spectrum (26, 0, 0)
        pts = np.zeros((26, 3))
        pts[:, 0] = np.arange(26, dtype=np.float64)
        normals = np.tile(np.array([0.0, 0.0, 1.0]), (26, 1))
        nbr = np.array([[j for j in range(26) if j != i][:25]
                        for i in range(26)])
        c = curvature_metric_c(pts, normals, nbr, np.array([0]))
        np.testing.assert_allclose(c, 3.0 / 26.0, rtol=1e-12)

    def test_varied_frames_score_higher(self):
        rng = np.random.default_rng(13)
        pts = rng.normal(size=(26, 3))
        normals = rng.normal(size=(26, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        nbr = np.array([[j for j in range(26) if j != i][:25]
                        for i in range(26)])
        flat_normals = np.tile(np.array([0.0, 0.0, 1.0]), (26, 1))
        flat_pts = np.zeros((26, 3))
        flat_pts[:, 0] = np.arange(26, dtype=np.float64)
        c_flat = curvature_metric_c(flat_pts, flat_normals, nbr, np.array([0]))
        c_var = curvature_metric_c(pts, normals, nbr, np.array([0]))
        assert c_var[0] > c_flat[0]

    def test_empty_selection(self):
        pts = np.zeros((5, 3))
        normals = np.tile(np.array([0.0, 0.0, 1.0]), (5, 1))
        nbr = np.zeros((5, 2), dtype=np.int64)
        out = curvature_metric_c(pts, normals, nbr, np.array([], dtype=np.int64))
        assert out.shape == (0,)


class TestCurvatureSaliency:
    def test_frozen_values(self):
        s12 = curvature_saliency_s12(np.array([1.0, 2.0]))
        np.testing.assert_allclose(s12, [2.581976707, 2.156517643], atol=1e-6)

    def test_clamp_small(self):
        # values below the clamp behave as the clamp: no division blowup
        out = curvature_saliency_s12(np.array([0.0, 1e-12, 1e-3]))
        assert np.isfinite(out).all()
        np.testing.assert_allclose(out[0], out[2])

    def test_exceeds_max(self):
        # 1/(1 - e^c) < 0 for c > 0, so every value sits above max(c)
        c = np.array([0.5, 1.5, 3.0])
        assert (curvature_saliency_s12(c) > c.max()).all()

    def test_large_values_no_overflow_warning(self):
        with np.errstate(over="raise"):
            out = curvature_saliency_s12(np.array([1.0, 800.0]))
        np.testing.assert_allclose(out, [800.581976707, 800.0], atol=1e-6)


class TestGeometricSaliency:
    def test_substitution(self):
        s11 = np.array([0.1, 0.1, 0.9])
        salient = np.array([2])
        c = np.array([1.0])
        s1_raw, s1 = geometric_saliency(s11, 0.5, c, salient)
        expected = 1.0 - 1.0 / (1.0 - np.e)
        np.testing.assert_allclose(s1_raw, [0.1, 0.1, expected])
        np.testing.assert_allclose(s1, [0.0, 0.0, 1.0])

    def test_no_salient_points(self):
        s11 = np.array([0.2, 0.4])
        s1_raw, s1 = geometric_saliency(s11, 1.0)
        np.testing.assert_array_equal(s1_raw, s11)
        np.testing.assert_allclose(s1, [0.0, 1.0])


class TestDepthSaliency:
    def test_endpoints_and_middle(self):
        out = depth_saliency([1.0, 3.0, 5.0], 1.0, 5.0)
        np.testing.assert_allclose(out, [1.0, 0.5, 0.0])

    def test_clamped_outside(self):
        out = depth_saliency([0.0, 10.0], 1.0, 5.0)
        np.testing.assert_allclose(out, [1.0, 0.0])

    def test_bad_planes(self):
        with pytest.raises(DataError):
            depth_saliency([1.0], 5.0, 1.0)


class TestFocusSaliency:
    def test_axis_point_is_peak(self):
        pts = np.array([
            [0.0, 0.0, -1.0],   # on axis
            [1.0, 0.0, -1.0],   # 45 degrees off
            [5.0, 0.0, -1.0],   # far off
        ])
        raw, norm = focus_saliency(pts, np.zeros(3), np.array([0.0, 0.0, -1.0]))
        assert raw[0] == 0.0
        assert raw[0] > raw[1] > raw[2]
        assert norm[0] == 1.0
        np.testing.assert_allclose(
            raw[1], 1.0 - np.sqrt(np.sqrt(2.0)), atol=1e-12
        )

    def test_behind_camera_clamped(self):
        pts = np.array([[0.0, 0.0, 5.0]])
        raw, _ = focus_saliency(pts, np.zeros(3), np.array([0.0, 0.0, -1.0]))
        np.testing.assert_allclose(raw[0], 1.0 - np.sqrt(1.0 / 1e-3))

    def test_exponent_sharpens(self):
        pts = np.array([[0.0, 0.0, -1.0], [1.0, 0.0, -1.0]])
        eye = np.zeros(3)
        d = np.array([0.0, 0.0, -1.0])
        raw_m1, _ = focus_saliency(pts, eye, d, m=1.0)
        raw_m2, _ = focus_saliency(pts, eye, d, m=2.0)
        assert raw_m2[1] < raw_m1[1]

    def test_point_at_eye_rejected(self):
        with pytest.raises(DataError):
            focus_saliency(np.zeros((1, 3)), np.zeros(3),
                           np.array([0.0, 0.0, -1.0]))


class TestExtendedSaliency:
    def test_frozen_default_weights(self):
        s = extended_saliency(
            np.array([0.6]), np.array([0.7]), np.array([1.0]), np.array([1.0])
        )
        np.testing.assert_allclose(s, 1.5 / 2.2)

    def test_weight_rescale_invariant(self):
        rng = np.random.default_rng(2)
        maps = [rng.random(10) for _ in range(4)]
        a = extended_saliency(*maps, weights=(1.0, 1.0, 0.1, 0.1))
        b = extended_saliency(*maps, weights=(10.0, 10.0, 1.0, 1.0))
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_strict_paper_mode_reuses_geometric(self):
        s1 = np.array([0.25])
        s2 = np.array([0.5])
        s3 = np.array([0.5])
        s4 = np.array([0.75])
        strict = extended_saliency(s1, s2, s3, s4, strict_paper_mode=True)
        swapped = extended_saliency(s1, s2, s3, s1)
        np.testing.assert_allclose(strict, swapped)

    def test_zero_weights_rejected(self):
        with pytest.raises(DataError):
            extended_saliency(
                np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2),
                weights=(0.0, 0.0, 0.0, 0.0),
            )

    def test_range_preserved(self):
        rng = np.random.default_rng(9)
        maps = [rng.random(100) for _ in range(4)]
        s = extended_saliency(*maps)
        assert (s >= 0.0).all() and (s <= 1.0).all()


def _visible_stack(points, k_a=125, workers=1):
    cam = default_camera(points)
    proj = project(points, cam)
    a = visibility_operator(proj, k_a=k_a, workers=workers)
    mask = classify_visible(a).visible_mask
    return cam, proj, a, mask


class TestComputeSaliency:
    def test_sphere_full_stack(self):
        pts = fibonacci_sphere(2000)
        cam, proj, a, mask = _visible_stack(pts)
        nbr = knn_indices(pts, 6)
        normals = estimate_normals(pts, nbr)
        bundle = compute_saliency(
            pts[mask], normals[mask], a[mask], proj.depths[mask], cam
        )
        assert isinstance(bundle, SaliencyBundle)
        n_v = int(mask.sum())
        for arr in (bundle.s1, bundle.s2, bundle.s3, bundle.s4, bundle.s):
            assert arr.shape == (n_v,)
            assert (arr >= 0.0).all() and (arr <= 1.0).all()
        assert bundle.s0 == 2.0 * bundle.s11.mean()

    def test_cube_edges_rank_high(self):
        # grid on each face of the unit cube; edge-band points carry
        # mixed normals, so their geometric saliency should dominate
        g = np.linspace(0.0, 1.0, 20)
        u, v = np.meshgrid(g, g)
        u = u.ravel()
        v = v.ravel()
        zeros = np.zeros_like(u)
        ones = np.ones_like(u)
        faces = [
            np.stack([u, v, zeros], axis=1), np.stack([u, v, ones], axis=1),
            np.stack([u, zeros, v], axis=1), np.stack([u, ones, v], axis=1),
            np.stack([zeros, u, v], axis=1), np.stack([ones, u, v], axis=1),
        ]
        pts = np.unique(np.concatenate(faces, axis=0), axis=0)
        nbr = knn_indices(pts, 6)
        normals = estimate_normals(pts, nbr)
        step = g[1] - g[0]
        # near an edge: at least two coordinates close to a boundary plane
        # (2.5 steps covers the normal-contamination reach of 25-NN balls)
        boundary = np.minimum(pts, 1.0 - pts) < 2.5 * step
        near_edge = boundary.sum(axis=1) >= 2
        all_nbr = knn_indices(pts, 25)
        s11 = eigen_saliency_s11(normals, all_nbr)
        # flat interior sits at the aligned-normals value
        np.testing.assert_allclose(
            s11[~near_edge].mean(), 1.0 / 26.0, rtol=0.05
        )
        assert s11[near_edge].mean() > 1.25 * s11[~near_edge].mean()
        ntop = max(1, pts.shape[0] // 20)
        top = np.argsort(s11)[-ntop:]
        assert near_edge[top].all()

    def test_single_visible_point_neutral(self):
        pts = fibonacci_sphere(200)
        cam, proj, a, mask = _visible_stack(pts, k_a=50)
        nbr = knn_indices(pts, 6)
        normals = estimate_normals(pts, nbr)
        one = np.flatnonzero(mask)[:1]
        bundle = compute_saliency(
            pts[one], normals[one], a[one], proj.depths[one], cam
        )
        assert bundle.s1[0] == 0.5
        assert bundle.s.shape == (1,)

    def test_empty_rejected(self):
        cam = default_camera(fibonacci_sphere(50))
        with pytest.raises(DataError):
            compute_saliency(
                np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0),
                cam,
            )

    def test_deterministic_across_workers(self):
        pts = fibonacci_sphere(1500)
        cam, proj, a, mask = _visible_stack(pts)
        nbr = knn_indices(pts, 6)
        normals = estimate_normals(pts, nbr)
        args = (pts[mask], normals[mask], a[mask], proj.depths[mask], cam)
        b1 = compute_saliency(*args, workers=1)
        b8 = compute_saliency(*args, workers=8)
        np.testing.assert_array_equal(b1.s, b8.s)
