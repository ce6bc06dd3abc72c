"""Hulls, volumes, Chebyshev centres, halfspace intersection, projections."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nearopt import geometry
from oracles import brute_force_vertices, monte_carlo_ball_hull_volume

RNG = np.random.default_rng


def cube_halfspaces(k: int, lo: float = 0.0, hi: float = 1.0):
    normals, offsets = [], []
    for i in range(k):
        e = np.zeros(k)
        e[i] = 1.0
        normals.append(e.copy())
        offsets.append(hi)
        normals.append(-e)
        offsets.append(-lo)
    return np.asarray(normals), np.asarray(offsets)


def cube_corners(k: int):
    return np.array(list(itertools.product([0.0, 1.0], repeat=k)))


class TestConvexHull:
    def test_cube_vertices_facets_and_areas(self):
        p = geometry.convex_hull(cube_corners(3))
        assert p.n_vertices == 8
        assert p.n_facets == 6
        assert np.allclose(np.sort(p.measures), 1.0)
        assert np.allclose(np.linalg.norm(p.normals, axis=1), 1.0)

    def test_interior_point_not_a_vertex(self):
        pts = np.vstack([cube_corners(3), [[0.5, 0.5, 0.5]]])
        p = geometry.convex_hull(pts)
        assert p.n_vertices == 8
        assert not any(np.allclose(v, [0.5, 0.5, 0.5]) for v in p.vertices)

    def test_degenerate_input_raises_with_rank(self):
        pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
        with pytest.raises(geometry.DegenerateHullError) as err:
            geometry.convex_hull(pts)
        assert err.value.affine_rank == 2

    def test_hull_idempotence(self):
        rng = RNG(3)
        pts = rng.normal(size=(60, 4))
        p = geometry.convex_hull(pts)
        q = geometry.convex_hull(p.vertices)
        assert p.n_vertices == q.n_vertices
        a = p.vertices[np.lexsort(p.vertices.T)]
        b = q.vertices[np.lexsort(q.vertices.T)]
        assert np.allclose(a, b, atol=1e-9)

    def test_containment_of_all_input_points(self):
        rng = RNG(4)
        pts = rng.normal(size=(120, 3)) * [1e9, 1e6, 1.0]  # wildly mixed scales
        p = geometry.convex_hull(pts)
        assert bool(np.all(p.contains(pts)))

    def test_ball_sample_volume_against_monte_carlo_oracle(self):
        rng = RNG(7)
        raw = rng.normal(size=(200, 4))
        pts = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        pts *= rng.random((200, 1)) ** 0.25
        p = geometry.convex_hull(pts)
        vol = geometry.volume(p)
        oracle = monte_carlo_ball_hull_volume(pts, n_samples=20000, seed=99)
        assert vol == pytest.approx(oracle, rel=0.02)


class TestVolume:
    def test_unit_hypercube_5d(self):
        p = geometry.convex_hull(cube_corners(5))
        assert geometry.volume(p) == pytest.approx(1.0, rel=1e-9)

    def test_standard_simplex_4d(self):
        pts = np.vstack([np.zeros(4), np.eye(4)])
        p = geometry.convex_hull(pts)
        assert geometry.volume(p) == pytest.approx(1.0 / math.factorial(4), rel=1e-9)

    def test_scale_statistic_from_volume_ratio(self):
        # the per-dimension scale implied by a 5-D volume ratio of 79
        assert 79 ** (1 / 5) == pytest.approx(2.4, abs=0.05)


class TestChebyshev:
    def test_unit_square(self):
        res = geometry.chebyshev(cube_halfspaces(2))
        assert res.centre == pytest.approx([0.5, 0.5], abs=1e-9)
        assert res.radius == pytest.approx(0.5, abs=1e-9)

    def test_right_triangle_incircle(self):
        normals = np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0] / np.sqrt(2)])
        offsets = np.array([0.0, 0.0, 1.0 / np.sqrt(2)])
        res = geometry.chebyshev((normals, offsets))
        r = (2.0 - math.sqrt(2.0)) / 2.0
        assert res.radius == pytest.approx(r, abs=1e-9)
        assert res.centre == pytest.approx([r, r], abs=1e-9)

    def test_empty_system(self):
        normals = np.array([[1.0], [-1.0]])
        offsets = np.array([0.0, -1.0])  # x <= 0 and x >= 1
        with pytest.raises(geometry.EmptyPolytopeError):
            geometry.chebyshev((normals, offsets))

    def test_unbounded_radius(self):
        normals = np.array([[1.0, 0.0]])
        offsets = np.array([1.0])
        with pytest.raises(geometry.UnboundedPolytopeError):
            geometry.chebyshev((normals, offsets))

    def test_ball_containment_under_random_directions(self):
        rng = RNG(12)
        pts = rng.normal(size=(40, 3))
        p = geometry.convex_hull(pts)
        res = geometry.chebyshev(p.halfspaces())
        dirs = rng.normal(size=(1000, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        probes = res.centre + res.radius * dirs
        assert bool(np.all(p.contains(probes, rtol=1e-6)))

    def test_radius_bounded_by_half_width_along_every_normal(self):
        rng = RNG(13)
        pts = rng.normal(size=(30, 3))
        p = geometry.convex_hull(pts)
        res = geometry.chebyshev(p.halfspaces())
        for a in p.normals:
            width = float(np.max(p.vertices @ a) - np.min(p.vertices @ a))
            assert res.radius <= width / 2 + 1e-7

    def test_tangent_facets_and_duals_reported(self):
        res = geometry.chebyshev(cube_halfspaces(2))
        assert len(res.tangent) == 4  # the ball touches all four square sides
        assert res.duals is not None and np.all(res.duals >= -1e-9)


class TestIntersectHalfspaces:
    def test_idempotence_on_identical_cubes(self):
        hs = cube_halfspaces(3)
        p = geometry.intersect_halfspaces([hs, hs])
        assert geometry.volume(p) == pytest.approx(1.0, rel=1e-7)
        assert p.n_vertices == 8

    def test_shifted_boxes(self):
        a = cube_halfspaces(2, 0.0, 2.0)
        b = cube_halfspaces(2, 1.0, 3.0)
        p = geometry.intersect_halfspaces([a, b])
        assert geometry.volume(p) == pytest.approx(1.0, rel=1e-7)
        lo, hi = p.vertices.min(axis=0), p.vertices.max(axis=0)
        assert np.allclose(lo, 1.0, atol=1e-7) and np.allclose(hi, 2.0, atol=1e-7)

    def test_empty_intersection_raises(self):
        a = cube_halfspaces(2, 0.0, 1.0)
        b = cube_halfspaces(2, 2.0, 3.0)
        with pytest.raises(geometry.EmptyPolytopeError):
            geometry.intersect_halfspaces([a, b])

    def test_zero_interior_counts_as_empty(self):
        a = cube_halfspaces(2, 0.0, 1.0)
        b = cube_halfspaces(2, 1.0, 2.0)  # touch at a single corner
        with pytest.raises(geometry.EmptyPolytopeError):
            geometry.intersect_halfspaces([a, b])

    def test_unbounded_system_detected(self):
        normals = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
        offsets = np.array([1.0, 0.0, 1.0])  # slab, open below
        with pytest.raises(geometry.UnboundedPolytopeError):
            geometry.intersect_halfspaces([(normals, offsets)])

    def test_vertices_match_combinatorial_oracle_3d(self):
        rng = RNG(21)
        for trial in range(20):
            # two random simplex-based systems around the origin
            systems = []
            for _ in range(2):
                pts = rng.normal(size=(4 + int(rng.integers(0, 3)), 3))
                p = geometry.convex_hull(pts)
                # recentre so the origin is interior to both
                shift = p.vertices.mean(axis=0)
                systems.append((p.normals, p.offsets - p.normals @ shift))
            normals = np.vstack([s[0] for s in systems])
            offsets = np.concatenate([s[1] for s in systems])
            expected = brute_force_vertices(normals, offsets)
            try:
                got = geometry.intersect_halfspaces(systems)
            except geometry.EmptyPolytopeError:
                assert len(expected) == 0 or brute_force_volume_is_flat(expected)
                continue
            assert got.n_vertices == len(expected), f"trial {trial}"
            a = got.vertices[np.lexsort(got.vertices.T)]
            b = expected[np.lexsort(expected.T)]
            assert np.allclose(a, b, atol=1e-6)

    def test_duality_round_trip_recovers_vertices(self):
        rng = RNG(30)
        pts = rng.normal(size=(25, 3))
        p = geometry.convex_hull(pts)
        q = geometry.intersect_halfspaces([p.halfspaces()])
        a = p.vertices[np.lexsort(p.vertices.T)]
        b = q.vertices[np.lexsort(q.vertices.T)]
        assert a.shape == b.shape
        assert np.allclose(a, b, atol=1e-6 * max(1.0, np.max(np.abs(a))))


def brute_force_volume_is_flat(verts: np.ndarray) -> bool:
    if len(verts) <= 3:
        return True
    centered = verts - verts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return bool(sv[-1] <= 1e-9 * max(sv[0], 1.0))


class TestProjectPair:
    def test_cube_projects_to_square(self):
        p = geometry.convex_hull(cube_corners(3))
        for dims in ((0, 1), (0, 2), (1, 2)):
            q = geometry.project_pair(p, dims)
            assert geometry.volume(q) == pytest.approx(1.0, rel=1e-9)
            assert q.n_vertices == 4

    def test_projection_commutes_with_hull(self):
        rng = RNG(40)
        pts = rng.normal(size=(50, 4))
        p = geometry.convex_hull(pts)
        q = geometry.project_pair(p, (1, 3))
        direct = geometry.convex_hull(pts[:, [1, 3]])
        a = q.vertices[np.lexsort(q.vertices.T)]
        b = direct.vertices[np.lexsort(direct.vertices.T)]
        assert np.allclose(a, b, atol=1e-9)

    def test_simplex_projection(self):
        pts = np.vstack([np.zeros(3), np.eye(3)])
        p = geometry.convex_hull(pts)
        q = geometry.project_pair(p, (0, 1))
        expect = {(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)}
        got = {tuple(np.round(v, 9)) for v in q.vertices}
        assert got == expect


class TestMinAngle:
    def test_same_vector(self):
        assert geometry.min_angle_to_set(np.array([1.0, 0.0]), [np.array([1.0, 0.0])]) == pytest.approx(0.0)

    def test_orthogonal(self):
        assert geometry.min_angle_to_set(np.array([1.0, 0.0]), [np.array([0.0, 1.0])]) == pytest.approx(90.0)

    def test_antipodal(self):
        assert geometry.min_angle_to_set(np.array([1.0, 0.0]), [np.array([-1.0, 0.0])]) == pytest.approx(180.0)

    def test_empty_set_is_infinite(self):
        assert geometry.min_angle_to_set(np.array([1.0, 0.0]), []) == math.inf

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_min_over_set(self, seed):
        rng = RNG(seed)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        used = []
        for _ in range(5):
            u = rng.normal(size=3)
            used.append(u / np.linalg.norm(u))
        got = geometry.min_angle_to_set(d, used)
        expect = min(
            math.degrees(math.acos(max(-1.0, min(1.0, float(d @ u))))) for u in used
        )
        assert got == pytest.approx(expect, abs=1e-9)


class TestSerialisation:
    def test_json_round_trip(self, tmp_path):
        rng = RNG(50)
        p = geometry.convex_hull(rng.normal(size=(30, 3)), labels=("a", "b", "c"))
        path = tmp_path / "poly.json"
        p.write_json(path)
        q = geometry.Polytope.read_json(path)
        assert q.labels == ("a", "b", "c")
        assert np.allclose(
            p.vertices[np.lexsort(p.vertices.T)], q.vertices[np.lexsort(q.vertices.T)], atol=1e-12
        )
        assert geometry.volume(p) == pytest.approx(geometry.volume(q), rel=1e-9)

    def test_vertices_csv(self, tmp_path):
        p = geometry.convex_hull(cube_corners(2), labels=("x", "y"))
        path = tmp_path / "verts.csv"
        p.write_vertices_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "x,y"
        assert len(lines) == 5
