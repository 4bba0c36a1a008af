import math

import numpy as np
import pytest

from planegrow.cad import (
    NoDirectionError,
    ReconstructionDocument,
    SnapResult,
    ViewPose,
    WorkPolygon,
    estimate_params,
    find_direction,
    polygon_construct,
    polygon_extrude,
    polygon_move_copy,
    snap_cursor,
)
from planegrow.errors import (
    DegeneratePolygonError,
    InvalidViewError,
    NoIntersectionError,
)
from planegrow.features import CornerFeature, EdgeFeature, FeatureSet, synthesize_features
from planegrow.growing import Segment, SegmentStats
from planegrow.polygons import extract_polygon
from planegrow.regression import Plane, PlaneRegression

from conftest import jittered_grid


def default_view(eye=(0, 0, 2), forward=(0, 0, -1), up=(0, 1, 0),
                 fov_deg=60.0, width=1280, height=720):
    return ViewPose(np.array(eye, dtype=float), np.array(forward, dtype=float),
                    np.array(up, dtype=float), math.radians(fov_deg), width, height)


def make_plane(normal, point, tangent):
    normal = np.asarray(normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    tangent = np.asarray(tangent, dtype=float)
    tangent = tangent / np.linalg.norm(tangent)
    return Plane(np.asarray(point, dtype=float), normal, tangent,
                 np.cross(normal, tangent), np.array([1.0, 1.0, 1e-8]))


def make_segment(sid, plane, extent=1.0, spacing=0.02, center_uv=(0.0, 0.0)):
    rng = np.random.default_rng(sid)
    uv = jittered_grid(center_uv[0] - extent / 2, center_uv[0] + extent / 2,
                       center_uv[1] - extent / 2, center_uv[1] + extent / 2,
                       spacing, rng)
    pts = plane.from_plane_coords(uv)
    reg = PlaneRegression.from_seed(pts[0])
    reg.add_many(pts[1:])
    poly = extract_polygon(plane, pts, alpha=0.2)
    return Segment(sid, reg, plane, pts, len(pts), poly,
                   SegmentStats(len(pts), poly.area, plane.variance))


class TestEstimateParams:
    def test_seed_radius_is_tenth_of_screen_width(self):
        view = default_view(fov_deg=60.0, width=1000, height=1000)
        # world width at depth z is 2 z tan(30 deg); pick z so width is 3 m
        z = 3.0 / (2.0 * math.tan(math.radians(30.0)))
        p0 = view.eye + z * view.forward
        params = estimate_params(view, p0, plane_threshold=0.005)
        assert params.seed_radius == pytest.approx(0.3, rel=1e-12)

    def test_density_endpoints(self):
        view = default_view()
        near = view.eye + 1.0 * view.forward
        far = view.eye + 100.0 * view.forward
        assert estimate_params(view, near, 0.01).density == pytest.approx(10000.0)
        assert estimate_params(view, far, 0.01).density == pytest.approx(100.0)

    def test_density_clamps_beyond_range(self):
        view = default_view()
        closer = view.eye + 0.2 * view.forward
        farther = view.eye + 500.0 * view.forward
        assert estimate_params(view, closer, 0.01).density == pytest.approx(10000.0)
        assert estimate_params(view, farther, 0.01).density == pytest.approx(100.0)

    def test_doubling_distance_doubles_seed_radius(self):
        view = default_view()
        p1 = view.eye + 2.0 * view.forward
        p2 = view.eye + 4.0 * view.forward
        r1 = estimate_params(view, p1, 0.01).seed_radius
        r2 = estimate_params(view, p2, 0.01).seed_radius
        assert r2 == pytest.approx(2.0 * r1, rel=1e-12)

    def test_density_monotone_in_depth(self):
        view = default_view()
        depths = [1.0, 2.0, 5.0, 20.0, 60.0, 100.0]
        densities = [estimate_params(view, view.eye + z * view.forward, 0.01).density
                     for z in depths]
        assert all(b <= a for a, b in zip(densities, densities[1:]))

    def test_behind_camera_rejected(self):
        view = default_view()
        with pytest.raises(InvalidViewError):
            estimate_params(view, view.eye - view.forward, 0.01)

    def test_threshold_passes_through(self):
        view = default_view()
        p = view.eye + 2.0 * view.forward
        assert estimate_params(view, p, 0.0042).plane_threshold == 0.0042


class TestSnapping:
    def setup_method(self):
        self.view = default_view(eye=(0.5, 0.5, 3.0))
        floor = make_plane([0, 0, 1], [0, 0, 0], [1, 0, 0])
        wall = make_plane([1, 0, 0], [0, 0, 0], [0, 1, 0])
        self.segments = [
            make_segment(0, floor, center_uv=(0.5, 0.5)),
            make_segment(1, wall, center_uv=(0.5, 0.5)),
        ]
        self.features = synthesize_features(self.segments, r=0.05)

    def test_priority_corner_over_edge(self):
        corner = CornerFeature(np.array([0.2, 0.2, 0.0]), (0, 1, 2), (0, 0, 0))
        edge = EdgeFeature(np.zeros(3), np.array([1.0, 0, 0]),
                           np.array([0.19, 0.2, 0.0]), np.array([1.0, 0.2, 0.0]),
                           (0, 1), 0.8, (0, 0))
        feats = FeatureSet(edges=[edge], corners=[corner])
        cursor = self.view.project([0.2, 0.2, 0.0])[0] + [3.0, 0.0]
        snap = snap_cursor(self.view, cursor, feats, [], snap_radius_px=8.0)
        assert snap.kind == "corner"
        assert np.allclose(snap.position, [0.2, 0.2, 0.0])

    def test_edge_closest_point_matches_oracle(self):
        a, b = np.array([0.0, 0.3, 0.0]), np.array([1.0, 0.3, 0.0])
        edge = EdgeFeature(a, np.array([1.0, 0, 0]), a, b, (0, 1), 1.0, (0, 0))
        feats = FeatureSet(edges=[edge])
        target = np.array([0.4, 0.3, 0.0])
        cursor = self.view.project(target)[0]
        snap = snap_cursor(self.view, cursor, feats, [])
        assert snap.kind == "edge"
        # oracle: analytic closest point between the pick ray and the line
        origin, direction = self.view.ray_through(cursor[0], cursor[1])
        u = b - a
        w = a - origin
        uv_ = u @ direction
        t = (uv_ * (w @ direction) - (w @ u)) / (u @ u - uv_ * uv_)
        expected = a + np.clip(t, 0, 1) * u
        assert np.linalg.norm(snap.position - expected) < 1e-9

    def test_plane_fallback_under_cursor(self):
        cursor = self.view.project([0.5, 0.5, 0.0])[0]
        snap = snap_cursor(self.view, cursor, FeatureSet(), self.segments)
        assert snap.kind == "plane"
        assert snap.feature_id == 0
        assert abs(snap.position[2]) < 1e-9

    def test_raw_point_fallback(self):
        pts = np.array([[4.0, 4.0, 0.0], [4.1, 4.0, 0.0]])
        cursor = self.view.project(pts[0])[0]
        snap = snap_cursor(self.view, cursor, FeatureSet(), [], raw_points=pts)
        assert snap.kind == "rawPoint"
        assert np.allclose(snap.position, pts[0])

    def test_miss_when_nothing_near(self):
        snap = snap_cursor(self.view, [5.0, 5.0], FeatureSet(), [])
        assert snap.kind == "miss"
        assert snap.position is None

    def test_snap_deterministic(self):
        cursor = self.view.project([0.5, 0.5, 0.0])[0]
        a = snap_cursor(self.view, cursor, self.features, self.segments)
        b = snap_cursor(self.view, cursor, self.features, self.segments)
        assert a.kind == b.kind and a.feature_id == b.feature_id
        assert np.array_equal(a.position, b.position)


class TestFindDirection:
    def setup_method(self):
        self.view = default_view(eye=(0.5, 0.5, 3.0))
        floor = make_plane([0, 0, 1], [0, 0, 0], [1, 0, 0])
        wall = make_plane([1, 0, 0], [0, 0, 0], [0, 1, 0])
        self.segments = [
            make_segment(0, floor, center_uv=(0.5, 0.5)),
            make_segment(1, wall, center_uv=(0.5, 0.5)),
        ]
        self.features = synthesize_features(self.segments, r=0.05)

    def test_plane_hit_returns_viewer_oriented_normal(self):
        cursor = self.view.project([0.5, 0.5, 0.0])[0]
        d = find_direction(self.view, cursor, FeatureSet(), self.segments)
        assert np.allclose(d, [0, 0, 1], atol=1e-12)  # toward the camera at z=3

    def test_zero_gesture_on_edge_returns_edge_direction(self):
        assert len(self.features.edges) == 1
        edge = self.features.edges[0]
        mid = 0.5 * (edge.start + edge.end)
        cursor = self.view.project(mid)[0]
        d = find_direction(self.view, cursor, self.features, self.segments,
                           gesture_px=(0.0, 0.0))
        assert abs(abs(d @ edge.direction) - 1.0) < 1e-9

    def test_gesture_picks_aligned_candidate(self):
        # the y-axis edge between floor and wall, horizontal gesture on screen
        edge = self.features.edges[0]
        mid = 0.5 * (edge.start + edge.end)
        cursor = self.view.project(mid)[0]
        d = find_direction(self.view, cursor, self.features, self.segments,
                           gesture_px=(40.0, 0.0))
        # horizontal screen motion aligns with world +x (floor tangent)
        assert abs(d @ np.array([1.0, 0, 0])) > 0.99
        # enumerate candidates and verify argmax of projected alignment
        best = None
        anchor = mid
        for seg in self.segments:
            for cand in (seg.plane.tangent, seg.plane.bitangent):
                for sign in (1, -1):
                    tip = self.view.project(anchor + 1e-3 * sign * cand)[0]
                    vec = tip - self.view.project(anchor)[0]
                    if np.linalg.norm(vec) < 1e-12:
                        continue
                    score = (vec / np.linalg.norm(vec)) @ np.array([1.0, 0.0])
                    if best is None or score > best[0]:
                        best = (score, sign * cand)
        for cand in [self.features.edges[0].direction]:
            for sign in (1, -1):
                tip = self.view.project(anchor + 1e-3 * sign * cand)[0]
                vec = tip - self.view.project(anchor)[0]
                if np.linalg.norm(vec) >= 1e-12:
                    score = (vec / np.linalg.norm(vec)) @ np.array([1.0, 0.0])
                    if score > best[0]:
                        best = (score, sign * cand)
        assert np.allclose(d, best[1], atol=1e-9)

    def test_no_hit_raises(self):
        with pytest.raises(NoDirectionError):
            find_direction(self.view, [2.0, 2.0], FeatureSet(), [])


class TestPolygonOps:
    def test_three_snaps_exact_triangle(self):
        verts = [np.array([0.0, 0, 0]), np.array([1.0, 0, 0]), np.array([0.0, 1, 0])]
        poly = polygon_construct(verts, "t0")
        assert poly.vertices.shape == (3, 3)
        assert np.allclose(poly.vertices, verts, atol=1e-12)

    def test_four_corner_wall_quad(self):
        verts = [[0, 0, 0], [2, 0, 0], [2, 0, 1], [0, 0, 1]]
        poly = polygon_construct(verts, "w0")
        assert np.allclose(poly.plane.distances(poly.vertices), 0.0, atol=1e-9)
        uv = poly.plane.to_plane_coords(poly.vertices)
        area = 0.0
        for i in range(len(uv)):
            j = (i + 1) % len(uv)
            area += uv[i, 0] * uv[j, 1] - uv[j, 0] * uv[i, 1]
        assert abs(abs(area) / 2.0 - 2.0) < 1e-9  # 2 m x 1 m wall

    def test_collinear_rejected(self):
        with pytest.raises(DegeneratePolygonError):
            polygon_construct([[0, 0, 0], [1, 0, 0], [2, 0, 0]])

    def test_self_intersecting_rejected(self):
        bowtie = [[0, 0, 0], [1, 1, 0], [1, 0, 0], [0, 1, 0]]
        with pytest.raises(DegeneratePolygonError):
            polygon_construct(bowtie)

    def test_non_coplanar_rejected(self):
        verts = [[0, 0, 0], [1, 0, 0], [1, 1, 0.5], [0, 1, 0]]
        with pytest.raises(DegeneratePolygonError):
            polygon_construct(verts)

    def test_move_zero_translation_identity(self):
        poly = polygon_construct([[0, 0, 0], [1, 0, 0], [0, 1, 0]], "p")
        moved = polygon_move_copy(poly, translation=[0.0, 0.0, 0.0])
        assert np.array_equal(moved.vertices, poly.vertices)

    def test_move_by_anchor_target(self):
        poly = polygon_construct([[0, 0, 0], [1, 0, 0], [0, 1, 0]], "p")
        a, b = np.array([0.0, 0, 0]), np.array([0.5, -0.25, 2.0])
        moved = polygon_move_copy(poly, anchor=a, target=b)
        assert np.allclose(moved.vertices, poly.vertices + (b - a), atol=1e-12)
        assert moved.provenance == "moved"

    def test_constrained_move_projects_shift(self):
        poly = polygon_construct([[0, 0, 0], [1, 0, 0], [0, 1, 0]], "p")
        a, b = np.array([0.0, 0, 0]), np.array([1.0, 2.0, 3.0])
        u = np.array([0.0, 0.0, 1.0])
        moved = polygon_move_copy(poly, anchor=a, target=b, direction=u)
        expected = ((b - a) @ u) * u  # projection oracle
        assert np.allclose(moved.vertices, poly.vertices + expected, atol=1e-12)

    def test_copy_preserves_original(self):
        poly = polygon_construct([[0, 0, 0], [1, 0, 0], [0, 1, 0]], "p")
        dup = polygon_move_copy(poly, translation=[0, 0, 1], copy=True, new_id="q")
        assert dup.polygon_id == "q"
        assert dup.provenance == "copied"
        assert np.allclose(poly.vertices[:, 2], 0.0)

    def test_extrude_unit_square_to_cube(self):
        poly = polygon_construct([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], "p")
        prism = polygon_extrude(poly, poly.plane.normal, length=1.0, prism_id="x")
        assert prism.length == 1.0
        assert np.allclose(np.abs(prism.cap_vertices[:, 2]), 1.0)

    def test_extrude_to_snap_target(self):
        poly = polygon_construct([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], "p")
        direction = np.array([0.0, 0.0, 1.0])
        target = np.array([5.0, 5.0, 0.30])  # plane 0.30 m away along direction
        prism = polygon_extrude(poly, direction, snap_target=target)
        assert abs(prism.length - 0.30) < 1e-9

    def test_extrude_parallel_direction_rejected(self):
        poly = polygon_construct([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], "p")
        with pytest.raises(NoIntersectionError):
            polygon_extrude(poly, [1.0, 0.0, 0.0], length=1.0)

    def test_extrude_negative_length_rejected(self):
        poly = polygon_construct([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], "p")
        with pytest.raises(ValueError):
            polygon_extrude(poly, [0, 0, 1], length=-0.5)


class TestDocument:
    def build_doc(self):
        doc = ReconstructionDocument()
        doc.add_polygon(polygon_construct(
            [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], "p0"))
        doc.move_polygon("p0", [0, 0, 0.5], copy=True, new_id="p1")
        doc.extrude_polygon("p0", [0, 0, 1], 0.25, "x0")
        return doc

    def test_journal_replay_byte_identical(self):
        doc = self.build_doc()
        replayed = ReconstructionDocument.replay(doc.journal)
        assert replayed.to_text() == doc.to_text()
        assert replayed.to_text().encode() == doc.to_text().encode()

    def test_text_round_trip(self):
        doc = self.build_doc()
        restored = ReconstructionDocument.from_text(doc.to_text())
        assert restored.to_text() == doc.to_text()
        assert set(restored.polygons) == {"p0", "p1"}
        assert set(restored.prisms) == {"x0"}

    def test_undo_removes_last_operation(self):
        doc = self.build_doc()
        assert "x0" in doc.prisms
        doc.undo()
        assert "x0" not in doc.prisms
        assert set(doc.polygons) == {"p0", "p1"}

    def test_copy_without_new_id_rejected(self):
        doc = self.build_doc()
        with pytest.raises(ValueError):
            doc.move_polygon("p0", [0, 0, 1], copy=True)
