import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .barrier import BarrierEval, CbfParams, PairState, RigidPair, error_bound, h_a
from .bench import sample_pose_pairs
from .constants import FD_STEP, FD_TOL, GEOM_TOL, GRAD_REL_TOL, QP_ORACLE_TOL, WEIGHT_SUM_TOL
from .dynamics import (
	CraneModel,
	crane_derivative,
	crane_derivative_transformed,
	crane_to_transformed,
	crane_transformed_matrices,
)
from .errors import GeometryError, ParameterError
from .filters import (
	CraneFilterConfig,
	FilterConfig,
	crane_energy_barrier,
	crane_energy_barrier_rate,
	filter_control_affine,
	filter_crane,
	filter_single_integrator,
	qp_kkt_solve,
)
from .geometry import (
	ConvexPolygon,
	PlanarPose,
	RigidPolygonShape,
	convex_hull,
	minkowski_difference_vertices,
	polygon_from_pose,
	shape_jacobians,
	support_value,
)
from .sdf import signed_distance, signed_distance_value

logger = logging.getLogger(__name__)

Shapes = Tuple[RigidPolygonShape, RigidPolygonShape]

DEFAULT_COUNTS: Dict[str, int] = {
	"sign_equivalence": 10000,
	"minkowski": 1000,
	"sandwich": 10000,
	"gradient": 1000,
	"filters": 1000,
	"crane_dual": 1000,
	"jacobians": 200,
	"sdf_symmetry": 200,
}


@dataclass
class PropertyCheck:
	name: str
	passed: bool
	samples: int
	max_error: float
	tolerance: float
	detail: str = ""


@dataclass
class PropertyReport:
	seed: int
	checks: List[PropertyCheck] = field(default_factory=list)

	@property
	def passed(self) -> bool:
		return all(c.passed for c in self.checks)

	def to_dict(self) -> Dict:
		return {"seed": self.seed, "passed": self.passed, "checks": [asdict(c) for c in self.checks]}


def _check(name: str, samples: int, max_error: float, tolerance: float, detail: str = "") -> PropertyCheck:
	passed = bool(max_error <= tolerance)
	level = logging.INFO if passed else logging.ERROR
	logger.log(level, f"{name}: {'OK' if passed else 'FAIL'} (max error {max_error:.3g}, tolerance {tolerance:.3g}, n={samples})")
	return PropertyCheck(name, passed, samples, float(max_error), float(tolerance), detail)


def random_convex_polygon(rng: np.random.Generator, max_edges: int = 8, center_box: float = 2.0) -> ConvexPolygon:
	"""Hull of 3..max_edges points on a jittered circle, clockwise."""
	while True:
		n = int(rng.integers(3, max_edges + 1))
		angles = np.sort(rng.uniform(0.0, 2 * math.pi, size=n))
		radii = rng.uniform(0.5, 2.0, size=n)
		center = rng.uniform(-center_box, center_box, size=2)
		pts = center + np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
		hull = convex_hull(pts)
		if hull.size >= 3:
			try:
				return ConvexPolygon.from_vertices(pts[hull[::-1]])
			except GeometryError:
				continue


def _pairs(rng: np.random.Generator, count: int, shapes: Shapes, box: float = 4.0):
	return sample_pose_pairs(rng, count, shapes, box=box)


def check_sign_equivalence(rng: np.random.Generator, count: int, shapes: Shapes) -> List[PropertyCheck]:
	lower_err = 0.0
	equal_err = 0.0
	sign_mismatch = 0
	contact_mismatch = 0
	overlaps = 0
	for pose_i, pose_j in _pairs(rng, count, shapes):
		pair = PairState.rigid(shapes, pose_i, pose_j)
		ha = h_a(pair.table())
		hs = signed_distance(pair.i.polygon, pair.j.polygon).value
		lower_err = max(lower_err, ha - hs)
		if hs <= 0:
			overlaps += 1
			equal_err = max(equal_err, abs(ha - hs))
		if abs(hs) > GEOM_TOL and abs(ha) > GEOM_TOL and (ha > 0) != (hs > 0):
			sign_mismatch += 1
		if abs(hs) > 1e-6:
			diff = minkowski_difference_vertices(pair.i.polygon, pair.j.polygon)
			if diff.contains(np.zeros(2)) == (hs > 0):
				contact_mismatch += 1
	return [
		_check("h_a_lower_bounds_sdf", count, lower_err, GEOM_TOL),
		_check("h_a_equals_sdf_in_penetration", overlaps, equal_err, GEOM_TOL),
		_check("sign_equivalence", count, float(sign_mismatch), 0.0, f"{sign_mismatch} mismatches"),
		_check("sdf_sign_matches_origin_test", count, float(contact_mismatch), 0.0),
	]


def check_minkowski(rng: np.random.Generator, count: int) -> List[PropertyCheck]:
	support_err = 0.0
	halfspace_err = 0.0
	normal_err = 0.0
	directions = np.stack([np.cos(np.linspace(0, 2 * math.pi, 32, endpoint=False)), np.sin(np.linspace(0, 2 * math.pi, 32, endpoint=False))], axis=1)
	for _ in range(count):
		pi = random_convex_polygon(rng)
		pj = random_convex_polygon(rng)
		diff = minkowski_difference_vertices(pi, pj)
		for a in directions:
			expected = support_value(pj, a) + support_value(pi, -a)
			support_err = max(support_err, abs(support_value(diff, a) - expected))
		family = np.vstack([-pi.normals, pj.normals])
		offsets = np.array([support_value(pj, n) + support_value(pi, -n) for n in family])
		halfspace_err = max(halfspace_err, float(np.max(diff.vertices @ family.T - offsets)))
		for n in diff.normals:
			normal_err = max(normal_err, float(np.min(np.linalg.norm(family - n, axis=1))))
	return [
		_check("support_additivity", count * len(directions), support_err, GEOM_TOL),
		_check("difference_inside_support_halfspaces", count, halfspace_err, GEOM_TOL),
		_check("difference_normals_from_inputs", count, normal_err, GEOM_TOL),
	]


def check_sandwich(rng: np.random.Generator, count: int, shapes: Shapes) -> List[PropertyCheck]:
	r_i, r_j = shapes[0].r, shapes[1].r
	b1 = math.log(r_i + r_j)
	worst = 0.0
	spread = {5.0: 0.0, 50.0: 0.0}
	for pose_i, pose_j in _pairs(rng, count, shapes):
		pair = PairState.rigid(shapes, pose_i, pose_j)
		table = pair.table()
		ha = h_a(table)
		for kappa in (1.0, 5.0, 50.0):
			for b in (b1, b1 + 1.0):
				params = CbfParams(kappa, b)
				lower, upper = error_bound(params, r_i, r_j)
				value = pair.evaluate(params, table).value
				worst = max(worst, (ha - lower) - value, value - (ha + upper))
				if b == b1 and kappa in spread:
					spread[kappa] += abs(value - ha)
	# ratio of mean gaps; both sums run over the same samples
	ratio = spread[5.0] / spread[50.0] if spread[50.0] > 0 else math.inf
	return [
		_check("smoothing_error_bound", count * 6, worst, 1e-12),
		_check("smoothing_error_scales_with_inverse_kappa", count, 0.0 if 8.0 <= ratio <= 12.0 else abs(ratio - 10.0), 0.0, f"ratio {ratio:.3f}"),
	]


def _fd_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
	grad = np.zeros_like(x)
	for k in range(x.size):
		e = np.zeros_like(x)
		e[k] = step
		grad[k] = (fn(x + e) - fn(x - e)) / (2 * step)
	return grad


def check_gradient(rng: np.random.Generator, count: int, shapes: Shapes) -> List[PropertyCheck]:
	params = CbfParams.under_approximating(5.0, shapes[0].r, shapes[1].r)
	rel_err = 0.0
	weight_err = 0.0
	block_deficit = 0.0
	tested = 0
	fast_err = 0.0

	def value(x: np.ndarray) -> float:
		return RigidPair.at(shapes, PlanarPose.from_state(x[:3]), PlanarPose.from_state(x[3:])).evaluate(params).value

	for pose_i, pose_j in _pairs(rng, count, shapes):
		x = np.concatenate([pose_i.p, [pose_i.theta], pose_j.p, [pose_j.theta]])
		pair = PairState.rigid(shapes, pose_i, pose_j)
		table = pair.table()
		ev = pair.evaluate(params, table)
		closed = RigidPair.at(shapes, pose_i, pose_j)
		fast = closed.evaluate(params)
		slow_t = PairState.rigid(shapes, pose_i, pose_j, translation_only=True).evaluate(params)
		fast_t = closed.evaluate(params, translation_only=True)
		fast_err = max(
			fast_err,
			abs(fast.value - ev.value),
			float(np.max(np.abs(fast.grad - ev.grad))) / max(1.0, float(np.linalg.norm(ev.grad))),
			float(np.max(np.abs(fast_t.grad - slow_t.grad))) / max(1.0, float(np.linalg.norm(slow_t.grad))),
		)
		weight_err = max(weight_err, abs(float(np.sum(ev.weights)) - 1.0), float(-np.min(ev.weights)))
		own_phi = np.linalg.norm(table.grad_phi[:, :, 3:], axis=2)
		own_psi = np.linalg.norm(table.grad_psi[:, :, :3], axis=2)
		block_deficit = max(block_deficit, 1.0 - float(min(own_phi.min(), own_psi.min())))
		g = ev.grad
		norm = float(np.linalg.norm(g))
		if norm < 1e-6:
			continue
		tested += 1
		rel_err = max(rel_err, float(np.linalg.norm(_fd_gradient(value, x) - g)) / norm)
	return [
		_check("gradient_matches_finite_differences", tested, rel_err, GRAD_REL_TOL),
		_check("gradient_weights_convex", count, weight_err, WEIGHT_SUM_TOL),
		_check("component_gradients_nonvanishing", count, block_deficit, 1e-9),
		_check("closed_form_pair_matches_gradient_tables", count, fast_err, 1e-10),
	]


def check_jacobians(rng: np.random.Generator, count: int, shapes: Shapes) -> List[PropertyCheck]:
	err = 0.0
	for _ in range(count):
		shape = shapes[int(rng.integers(0, 2))]
		x = np.concatenate([rng.uniform(-5, 5, size=2), [rng.uniform(-math.pi, math.pi)]])
		jac = shape_jacobians(shape, PlanarPose.from_state(x))
		for k in range(3):
			e = np.zeros(3)
			e[k] = FD_STEP
			hi = polygon_from_pose(shape, PlanarPose.from_state(x + e))
			lo = polygon_from_pose(shape, PlanarPose.from_state(x - e))
			scale = 2 * FD_STEP
			err = max(
				err,
				float(np.max(np.abs((hi.vertices - lo.vertices) / scale - jac.dv[:, :, k]))),
				float(np.max(np.abs((hi.normals - lo.normals) / scale - jac.dA[:, :, k]))),
				float(np.max(np.abs((hi.offsets - lo.offsets) / scale - jac.db[:, k]))),
			)
	return [_check("shape_jacobians_match_finite_differences", count, err, FD_TOL)]


def check_sdf_symmetry(rng: np.random.Generator, count: int, shapes: Shapes) -> List[PropertyCheck]:
	sym = 0.0
	trans = 0.0
	direct = 0.0
	for pose_i, pose_j in _pairs(rng, count, shapes):
		pi = polygon_from_pose(shapes[0], pose_i)
		pj = polygon_from_pose(shapes[1], pose_j)
		value = signed_distance(pi, pj).value
		direct = max(direct, abs(value - signed_distance_value(pi, pj)))
		sym = max(sym, abs(value - signed_distance(pj, pi).value))
		shift = rng.uniform(-3, 3, size=2)
		moved_i = polygon_from_pose(shapes[0], PlanarPose(pose_i.p + shift, pose_i.theta))
		moved_j = polygon_from_pose(shapes[1], PlanarPose(pose_j.p + shift, pose_j.theta))
		trans = max(trans, abs(value - signed_distance(moved_i, moved_j).value))
	return [
		_check("sdf_symmetric", count, sym, 1e-12),
		_check("sdf_translation_invariant", count, trans, 1e-12),
		_check("sdf_value_matches_minkowski_hull", count, direct, GEOM_TOL),
	]


def _rel(a: np.ndarray, b: np.ndarray) -> float:
	return float(np.linalg.norm(a - b)) / max(1.0, float(np.linalg.norm(b)))


def check_filters(rng: np.random.Generator, count: int, shapes: Shapes) -> List[PropertyCheck]:
	alpha = 5.0
	cfg = FilterConfig(alpha, epsilon=0.0)
	si_err = 0.0
	ca_err = 0.0
	residual = 0.0
	for _ in range(count):
		h = float(rng.normal())
		ev = BarrierEval(h, rng.normal(size=3), rng.normal(size=3), np.ones(1), h)
		u0 = (rng.normal(size=3), rng.normal(size=3))
		res = filter_single_integrator(u0[0], u0[1], ev, cfg)
		for a, grad in enumerate((ev.grad_xi, ev.grad_xj)):
			oracle = qp_kkt_solve(np.eye(3), u0[a], grad, -0.5 * alpha * h)
			si_err = max(si_err, _rel(res.u_star[a], oracle))
		residual = max(residual, -res.constraint_residual)

		f = (rng.normal(size=3), rng.normal(size=3))
		g = (rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))
		u0 = (rng.normal(size=2), rng.normal(size=2))
		res = filter_control_affine(f, g, u0, ev, cfg)
		for a, grad in enumerate((ev.grad_xi, ev.grad_xj)):
			oracle = qp_kkt_solve(np.eye(2), u0[a], g[a].T @ grad, -0.5 * alpha * h - float(grad @ f[a]))
			ca_err = max(ca_err, _rel(res.u_star[a], oracle))
		residual = max(residual, -res.constraint_residual)

	model = CraneModel()
	crane_cfg = CraneFilterConfig(np.diag([1000.0, 2.0]), 3.0, 500.0)
	crane_err = 0.0
	for _ in range(count):
		state = np.concatenate([rng.uniform(-5, 5, size=2), [rng.uniform(-0.6, 0.6)], rng.normal(size=3)])
		h = float(rng.normal())
		ev = BarrierEval(h, rng.normal(size=2), rng.normal(size=2), np.ones(1), h)
		v_obs = rng.normal(size=2) * 0.2
		u0 = rng.normal(size=2) * 50.0
		res = filter_crane(u0, state, np.zeros(2), v_obs, shapes, CbfParams(5.0, 8.0), crane_cfg, model, barrier=ev)
		M_T, _, _, _ = crane_transformed_matrices(state, model)
		_, p_dot = crane_to_transformed(state, model)
		phi = crane_energy_barrier(p_dot, crane_cfg.eta_gain, ev, M_T)
		c = -state[3:5]
		d = -crane_cfg.alpha * phi - crane_energy_barrier_rate(np.zeros(2), state, v_obs, crane_cfg.eta_gain, ev, model)
		crane_err = max(crane_err, _rel(res.u_star[0], qp_kkt_solve(crane_cfg.Q, u0, c, d)))
		residual = max(residual, -res.constraint_residual / max(1.0, abs(d)))
	return [
		_check("single_integrator_filter_matches_qp", count, si_err, QP_ORACLE_TOL),
		_check("control_affine_filter_matches_qp", count, ca_err, QP_ORACLE_TOL),
		_check("crane_filter_matches_qp", count, crane_err, QP_ORACLE_TOL),
		_check("filter_constraints_satisfied", 3 * count, residual, GEOM_TOL),
	]


def check_crane_dual(rng: np.random.Generator, count: int) -> List[PropertyCheck]:
	model = CraneModel()
	err = 0.0
	for _ in range(count):
		state = np.concatenate([rng.uniform(-5, 5, size=2), [rng.uniform(-1.4, 1.4)], rng.normal(size=3) * 2.0])
		u = rng.normal(size=2) * 100.0
		a = crane_derivative(state, u, model)
		b = crane_derivative_transformed(state, u, model)
		err = max(err, float(np.max(np.abs(a - b))) / max(1.0, float(np.max(np.abs(a)))))
	return [_check("crane_formulations_agree", count, err, 1e-9)]


def run_property_suite(shapes: Shapes, seed: int = 0, counts: Optional[Dict[str, int]] = None) -> PropertyReport:
	"""Run every sampled property check; failures are report entries, not exceptions."""
	n = dict(DEFAULT_COUNTS)
	if counts:
		unknown = sorted(set(counts) - set(n))
		if unknown:
			raise ParameterError(f"unknown property count(s): {', '.join(unknown)}")
		n.update(counts)
	rng = np.random.default_rng(seed)
	report = PropertyReport(seed)
	report.checks.extend(check_sign_equivalence(rng, n["sign_equivalence"], shapes))
	report.checks.extend(check_minkowski(rng, n["minkowski"]))
	report.checks.extend(check_sandwich(rng, n["sandwich"], shapes))
	report.checks.extend(check_gradient(rng, n["gradient"], shapes))
	report.checks.extend(check_jacobians(rng, n["jacobians"], shapes))
	report.checks.extend(check_sdf_symmetry(rng, n["sdf_symmetry"], shapes))
	report.checks.extend(check_filters(rng, n["filters"], shapes))
	report.checks.extend(check_crane_dual(rng, n["crane_dual"]))
	failed = [c.name for c in report.checks if not c.passed]
	if failed:
		logger.error(f"{len(failed)} property check(s) failed: {', '.join(failed)}")
	else:
		logger.info(f"all {len(report.checks)} property checks passed")
	return report
