import math
import os
import sys

import numpy as np
from scipy.spatial import ConvexHull

from polycbf.errors import GeometryError
from polycbf.geometry import (
	ConvexPolygon,
	PlanarPose,
	RigidPolygonShape,
	ShapeJacobians,
	formation_jacobians,
	formation_polygon,
	halfspace_signed_distance,
	load_shape,
	minkowski_difference_vertices,
	polygon_from_pose,
	rotation,
	shape_jacobians,
	support_value,
)
from polycbf.verify import check_jacobians, check_minkowski, random_convex_polygon

HERE = os.path.dirname(os.path.abspath(__file__))
SQUARE = RigidPolygonShape(np.array([[0.5, 0.5], [0.5, -0.5], [-0.5, -0.5], [-0.5, 0.5]]))
TRIANGLE = np.array([[3.0, 0.0], [-2.0, -2.5], [-2.0, 2.5]])
TRAPEZOID = np.array([[1.0, 1.5], [1.0, -1.5], [-1.0, -1.0], [-1.0, 1.0]])


def _raises(fn, invariant=None):
	try:
		fn()
	except GeometryError as e:
		if invariant is not None:
			assert e.invariant == invariant, e.invariant
		return
	raise AssertionError("expected GeometryError")


def test_pose_at_origin_keeps_body_vertices():
	poly = polygon_from_pose(RigidPolygonShape(TRIANGLE), PlanarPose(np.zeros(2), 0.0))
	assert np.allclose(poly.vertices, TRIANGLE)


def test_square_edge_normal_and_offset():
	poly = polygon_from_pose(SQUARE, PlanarPose(np.zeros(2), 0.0))
	assert np.allclose(poly.normals[0], [1.0, 0.0])
	assert abs(poly.offsets[0] - 0.5) < 1e-15


def test_quarter_turn_moves_vertex():
	shape = RigidPolygonShape(np.array([[0.5, 0.25], [0.5, -0.25], [-0.5, -0.25], [-0.5, 0.25]]))
	poly = polygon_from_pose(shape, PlanarPose(np.zeros(2), math.pi / 2))
	assert np.allclose(poly.vertices[0], [-0.25, 0.5])
	assert np.allclose(rotation(math.pi / 2) @ [1.0, 0.0], [0.0, 1.0])


def test_polygons_are_read_only():
	poly = polygon_from_pose(SQUARE, PlanarPose(np.zeros(2), 0.0))
	try:
		poly.vertices[0, 0] = 9.0
	except ValueError:
		return
	raise AssertionError("vertices should not be writable")


def test_validator_rejects_bad_input():
	_raises(lambda: ConvexPolygon.from_vertices(TRIANGLE[::-1]), "clockwise")
	_raises(lambda: ConvexPolygon.from_vertices([[0, 0], [0, 1], [0, 1], [1, 0]]), "edge_length")
	_raises(lambda: ConvexPolygon.from_vertices([[0, 0], [0, 1], [0, 2], [1, 0]]), "strict_convexity")
	_raises(lambda: ConvexPolygon.from_vertices([[0, 0], [0, 1]]), "vertex_count")
	_raises(lambda: RigidPolygonShape(np.array([[0, 0], [0, 1], [1, 1], [0.2, 0.5], [1, 0]])))
	poly = polygon_from_pose(SQUARE, PlanarPose(np.zeros(2), 0.0))
	bad = ConvexPolygon(poly.normals * 1.01, poly.offsets, poly.vertices)
	_raises(bad.validate, "unit_normal")


def test_contains_and_halfspace_distance():
	poly = polygon_from_pose(SQUARE, PlanarPose(np.array([1.0, 0.0]), 0.0))
	assert poly.contains([1.2, 0.1])
	assert not poly.contains([0.4, 0.0])
	assert halfspace_signed_distance([2.0, 0.0], [1.0, 0.0], 0.5) == 1.5
	assert halfspace_signed_distance([0.0, 0.0], [1.0, 0.0], 0.5) == -0.5


def test_vertex_jacobian_third_column():
	shape = RigidPolygonShape(np.array([[1.0, 0.0], [0.0, -1.0], [-1.0, 0.0]]))
	jac = shape_jacobians(shape, PlanarPose(np.zeros(2), 0.0))
	assert np.allclose(jac.dv[0, :, 2], [0.0, 1.0])
	assert np.allclose(jac.dv[1, :, :2], np.eye(2))


def test_shape_jacobians_match_finite_differences():
	shapes = (RigidPolygonShape(TRIANGLE), RigidPolygonShape(TRAPEZOID))
	checks = check_jacobians(np.random.default_rng(3), 50, shapes)
	assert all(c.passed for c in checks), checks


def test_translation_only_jacobians():
	jac = shape_jacobians(SQUARE, PlanarPose(np.array([2.0, 1.0]), 0.0), translation_only=True)
	assert jac.n_state == 2
	assert np.allclose(jac.dA, 0.0)
	poly = polygon_from_pose(SQUARE, PlanarPose(np.array([2.0, 1.0]), 0.0))
	assert np.allclose(jac.db, poly.normals)


def test_rank_deficient_vertex_jacobians_rejected():
	flat = np.zeros((3, 2, 2))
	flat[:, 0, 0] = 1.0
	_raises(lambda: ShapeJacobians(np.zeros((3, 2, 2)), np.zeros((3, 2)), flat), "jacobian_rank")
	jac = shape_jacobians(SQUARE, PlanarPose(np.array([1.0, -2.0]), 0.4))
	assert jac.full_rank
	assert np.all(np.linalg.matrix_rank(jac.dv) == 2)


def test_posed_polygons_keep_every_invariant():
	rng = np.random.default_rng(4)
	shape = RigidPolygonShape(TRAPEZOID)
	for _ in range(50):
		pose = PlanarPose(rng.uniform(-10, 10, size=2), rng.uniform(-math.pi, math.pi))
		poly = polygon_from_pose(shape, pose, validate=True)
		assert np.allclose(poly.offsets, np.einsum("kc,kc->k", poly.normals, poly.vertices), rtol=0.0, atol=1e-12)


def test_formation_triangle():
	poly = formation_polygon([[0, 0], [0, 1], [1, 0]])
	assert np.allclose(poly.normals[0], [-1.0, 0.0])
	_raises(lambda: formation_polygon([[0, 0], [1, 1], [2, 2]]), "collinear")
	# counter-clockwise input is reordered
	ccw = formation_polygon([[0, 0], [1, 0], [0, 1]])
	ccw.validate()


def test_formation_random_triples_are_valid():
	rng = np.random.default_rng(11)
	for _ in range(100):
		q = rng.uniform(-5, 5, size=(3, 2))
		try:
			formation_polygon(q).validate()
		except GeometryError as e:
			assert e.invariant == "collinear"


def test_formation_jacobians_finite_differences():
	rng = np.random.default_rng(5)
	for _ in range(20):
		q = rng.uniform(-3, 3, size=(3, 2))
		jac = formation_jacobians(q)
		base = q.ravel()
		for k in range(6):
			e = np.zeros(6)
			e[k] = 1e-6
			hi = formation_polygon((base + e).reshape(3, 2))
			lo = formation_polygon((base - e).reshape(3, 2))
			assert np.allclose((hi.vertices - lo.vertices) / 2e-6, jac.dv[:, :, k], atol=1e-6)
			assert np.allclose((hi.normals - lo.normals) / 2e-6, jac.dA[:, :, k], atol=1e-6)
			assert np.allclose((hi.offsets - lo.offsets) / 2e-6, jac.db[:, k], atol=1e-6)


def test_square_self_difference():
	p = polygon_from_pose(SQUARE, PlanarPose(np.zeros(2), 0.0))
	diff = minkowski_difference_vertices(p, p)
	assert diff.r == 4
	assert np.allclose(np.sort(np.abs(diff.vertices).ravel()), 1.0)


def test_difference_translates_with_second_polygon():
	p = polygon_from_pose(SQUARE, PlanarPose(np.zeros(2), 0.0))
	q = polygon_from_pose(SQUARE, PlanarPose(np.array([3.0, 0.0]), 0.0))
	diff = minkowski_difference_vertices(p, q)
	assert np.allclose(diff.vertices.mean(axis=0), [3.0, 0.0])
	assert abs(support_value(diff, [1.0, 0.0]) - 4.0) < 1e-12


def test_vehicle_difference_matches_scipy_hull():
	pi = polygon_from_pose(RigidPolygonShape(TRIANGLE), PlanarPose(np.array([0.3, -1.0]), 0.4))
	pj = polygon_from_pose(RigidPolygonShape(TRAPEZOID), PlanarPose(np.array([2.0, 1.0]), -1.1))
	diff = minkowski_difference_vertices(pi, pj)
	pts = (pj.vertices[None, :, :] - pi.vertices[:, None, :]).reshape(-1, 2)
	hull = ConvexHull(pts)
	assert diff.r == len(hull.vertices) == 7
	assert abs(abs(ConvexHull(diff.vertices).volume) - hull.volume) < 1e-9


def test_minkowski_properties_on_random_pairs():
	checks = check_minkowski(np.random.default_rng(7), 100)
	assert all(c.passed for c in checks), checks


def test_support_value():
	p = polygon_from_pose(SQUARE, PlanarPose(np.zeros(2), 0.0))
	assert support_value(p, [1.0, 0.0]) == 0.5
	assert abs(support_value(p, np.array([1.0, 1.0]) / math.sqrt(2)) - math.sqrt(2) / 2) < 1e-15
	_raises(lambda: support_value(p, [0.0, 0.0]), "direction")


def test_support_matches_dense_sampling():
	rng = np.random.default_rng(2)
	for _ in range(20):
		poly = random_convex_polygon(rng)
		d = rng.normal(size=2)
		t = np.linspace(0, 1, 200)
		nxt = np.roll(poly.vertices, -1, axis=0)
		samples = (poly.vertices[:, None, :] + t[None, :, None] * (nxt - poly.vertices)[:, None, :]).reshape(-1, 2)
		assert abs(support_value(poly, d) - float(np.max(samples @ d))) < 1e-12


def test_shape_files_load():
	tri = load_shape(os.path.join(HERE, "shapes", "vehicle_triangle.json"))
	assert np.allclose(tri.body_vertices, TRIANGLE)
	trap = load_shape(os.path.join(HERE, "shapes", "vehicle_trapezoid.json"))
	assert np.allclose(trap.body_vertices, TRAPEZOID)
	for name in ("crane_container.json", "crane_obstacle.json"):
		assert load_shape(os.path.join(HERE, "shapes", name)).r == 4


def main() -> None:
	failed = 0
	for name, fn in list(globals().items()):
		if name.startswith("test_") and callable(fn):
			try:
				fn()
				print(f"OK: {name}")
			except Exception as e:
				failed += 1
				print(f"FAIL: {name}: {e!r}")
	if failed:
		print(f"\n{failed} test(s) failed")
		sys.exit(1)
	print("\nAll geometry tests passed.")


if __name__ == "__main__":
	main()
