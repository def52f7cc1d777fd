import math
import os
import sys

import numpy as np

from polycbf.baseline import BaselineConfig, baseline_filter_step, baseline_h_and_gradient
from polycbf.bench import sample_pose_pairs
from polycbf.dynamics import unicycle_input_matrix
from polycbf.errors import OverlapError, ParameterError
from polycbf.filters import FilterConfig, filter_control_affine
from polycbf.geometry import PlanarPose, RigidPolygonShape, load_shape, polygon_from_pose
from polycbf.sdf import signed_distance

HERE = os.path.dirname(os.path.abspath(__file__))
SQUARE = RigidPolygonShape(np.array([[0.5, 0.5], [0.5, -0.5], [-0.5, -0.5], [-0.5, 0.5]]))
VEHICLES = (
	load_shape(os.path.join(HERE, "shapes", "vehicle_triangle.json")),
	load_shape(os.path.join(HERE, "shapes", "vehicle_trapezoid.json")),
)


def _max_edge(shape: RigidPolygonShape) -> float:
	v = shape.body_vertices
	return float(np.max(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)))


def test_axis_aligned_squares():
	for density in (2, 10, 15, 20):
		ev = baseline_h_and_gradient(
			PlanarPose(np.zeros(2), 0.0),
			PlanarPose(np.array([3.0, 0.0]), 0.0),
			(SQUARE, SQUARE),
			BaselineConfig(density),
		)
		assert abs(ev.value - 2.0) < 1e-12
		assert np.allclose(ev.grad_xi[:2], [-1.0, 0.0])
		assert np.allclose(ev.grad_xj[:2], [1.0, 0.0])


def test_value_within_sampling_bound_of_exact_distance():
	rng = np.random.default_rng(40)
	pairs = sample_pose_pairs(rng, 100, VEHICLES, box=6.0, separated=True)
	for density in (20, 40):
		bound = max(_max_edge(VEHICLES[0]), _max_edge(VEHICLES[1])) / (density - 1)
		for pose_i, pose_j in pairs:
			exact = signed_distance(polygon_from_pose(VEHICLES[0], pose_i), polygon_from_pose(VEHICLES[1], pose_j)).value
			value = baseline_h_and_gradient(pose_i, pose_j, VEHICLES, BaselineConfig(density)).value
			assert exact - 1e-12 <= value <= exact + bound + 1e-12, (exact, value, bound)


def test_gradient_matches_local_finite_differences():
	rng = np.random.default_rng(41)
	cfg = BaselineConfig(20)
	h = 1e-7
	for pose_i, pose_j in sample_pose_pairs(rng, 20, VEHICLES, box=6.0, separated=True):
		ev = baseline_h_and_gradient(pose_i, pose_j, VEHICLES, cfg)
		xi = np.concatenate([pose_i.p, [pose_i.theta]])
		for k in range(3):
			e = np.zeros(3)
			e[k] = h
			hi = baseline_h_and_gradient(PlanarPose.from_state(xi + e), pose_j, VEHICLES, cfg).value
			lo = baseline_h_and_gradient(PlanarPose.from_state(xi - e), pose_j, VEHICLES, cfg).value
			assert abs((hi - lo) / (2 * h) - ev.grad_xi[k]) < 1e-5


def test_overlap_raises():
	try:
		baseline_h_and_gradient(PlanarPose(np.zeros(2), 0.0), PlanarPose(np.array([0.6, 0.0]), 0.0), (SQUARE, SQUARE), BaselineConfig(10))
	except OverlapError:
		return
	raise AssertionError("expected OverlapError")


def test_config_validation():
	for bad in (1, 2.5, 0):
		try:
			BaselineConfig(bad)
		except ParameterError:
			continue
		raise AssertionError(f"expected ParameterError for {bad!r}")


def test_filter_step_uses_sampled_barrier():
	pose_i = PlanarPose(np.array([-4.0, 0.0]), 0.2)
	pose_j = PlanarPose(np.array([4.5, 0.5]), math.pi)
	g = (unicycle_input_matrix(pose_i.theta), unicycle_input_matrix(pose_j.theta))
	f = (np.zeros(3), np.zeros(3))
	u0 = (np.array([3.0, 0.0]), np.array([3.0, 0.0]))
	cfg = FilterConfig(5.0)
	res, ev = baseline_filter_step(f, g, u0, pose_i, pose_j, VEHICLES, BaselineConfig(20), cfg)
	ref = filter_control_affine(f, g, u0, ev, cfg)
	assert np.array_equal(res.u, ref.u)
	assert res.constraint_residual >= -1e-9


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
	print("\nAll baseline tests passed.")


if __name__ == "__main__":
	main()
