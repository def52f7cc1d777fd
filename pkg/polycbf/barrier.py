import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .constants import DEFAULT_EPSILON
from .errors import GeometryError, ParameterError
from .geometry import (
	B,
	ConvexPolygon,
	PlanarPose,
	RigidPolygonShape,
	ShapeJacobians,
	formation_jacobians,
	formation_polygon,
	polygon_from_pose,
	shape_jacobians,
)


@dataclass(frozen=True)
class CbfParams:
	kappa: float
	buffer_b: float
	epsilon: float = DEFAULT_EPSILON

	def __post_init__(self) -> None:
		if not (math.isfinite(self.kappa) and self.kappa > 0):
			raise ParameterError(f"kappa must be a finite positive number, got {self.kappa!r}")
		if not math.isfinite(self.buffer_b):
			raise ParameterError(f"buffer_b must be finite, got {self.buffer_b!r}")
		if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
			raise ParameterError(f"epsilon must be >= 0, got {self.epsilon!r}")

	@classmethod
	def under_approximating(cls, kappa: float, r_i: int, r_j: int, epsilon: float = DEFAULT_EPSILON) -> "CbfParams":
		"""Smallest buffer that keeps hhat <= h_a: b = ln(r_i + r_j)."""
		return cls(kappa, math.log(r_i + r_j), epsilon)

	def require_under_approximation(self, r_i: int, r_j: int) -> None:
		need = math.log(r_i + r_j)
		if self.buffer_b < need - 1e-12:
			raise ParameterError(f"buffer_b={self.buffer_b:.6g} is below ln({r_i}+{r_j})={need:.6g}; hhat would over-approximate h_a")


@dataclass(frozen=True)
class PosedShape:
	polygon: ConvexPolygon
	jacobians: ShapeJacobians

	@classmethod
	def rigid(cls, shape: RigidPolygonShape, pose: PlanarPose, translation_only: bool = False) -> "PosedShape":
		poly = polygon_from_pose(shape, pose)
		return cls(poly, shape_jacobians(shape, pose, translation_only, polygon=poly))

	@classmethod
	def formation(cls, agent_positions) -> "PosedShape":
		return cls(formation_polygon(agent_positions), formation_jacobians(agent_positions))

	@property
	def n_state(self) -> int:
		return self.jacobians.n_state


@dataclass(frozen=True)
class ComponentTable:
	"""phi[k, l] = A^i_k·v^j_l - b^i_k, psi[k, l] = A^j_k·v^i_l - b^j_k, and their gradients in x = (x^i, x^j)."""

	phi: np.ndarray
	psi: np.ndarray
	grad_phi: np.ndarray
	grad_psi: np.ndarray
	n_i: int
	n_j: int

	def __post_init__(self) -> None:
		n = self.n_i + self.n_j
		if self.grad_phi.shape != self.phi.shape + (n,) or self.grad_psi.shape != self.psi.shape + (n,):
			raise ParameterError(
				f"gradient tables {self.grad_phi.shape}, {self.grad_psi.shape} do not match "
				f"components {self.phi.shape}, {self.psi.shape} with n = {self.n_i} + {self.n_j}"
			)


@dataclass(frozen=True)
class BarrierEval:
	value: float
	grad_xi: np.ndarray
	grad_xj: np.ndarray
	weights: np.ndarray
	h_a: float

	@property
	def grad(self) -> np.ndarray:
		return np.concatenate([self.grad_xi, self.grad_xj])


def _check_rows(poly: ConvexPolygon, jac: ShapeJacobians, who: str) -> None:
	if jac.db.shape[0] != poly.r:
		raise ParameterError(f"{who}: Jacobians cover {jac.db.shape[0]} edges but the polygon has {poly.r}")


def component_table(si: PosedShape, sj: PosedShape) -> ComponentTable:
	pi, pj = si.polygon, sj.polygon
	ji, jj = si.jacobians, sj.jacobians
	_check_rows(pi, ji, "agent i")
	_check_rows(pj, jj, "agent j")

	phi = pi.normals @ pj.vertices.T - pi.offsets[:, None]
	psi = pj.normals @ pi.vertices.T - pj.offsets[:, None]

	grad_phi = np.concatenate([
		np.einsum("lc,kcn->kln", pj.vertices, ji.dA) - ji.db[:, None, :],
		np.einsum("kc,lcn->kln", pi.normals, jj.dv),
	], axis=2)
	grad_psi = np.concatenate([
		np.einsum("kc,lcn->kln", pj.normals, ji.dv),
		np.einsum("lc,kcn->kln", pi.vertices, jj.dA) - jj.db[:, None, :],
	], axis=2)

	if np.any(np.linalg.norm(grad_phi, axis=2) == 0.0) or np.any(np.linalg.norm(grad_psi, axis=2) == 0.0):
		raise GeometryError("vanishing_gradient", "a component gradient is identically zero")
	return ComponentTable(phi, psi, grad_phi, grad_psi, si.n_state, sj.n_state)


def h_a(table: ComponentTable) -> float:
	return _max_min(table.phi, table.psi)


def _max_min(phi: np.ndarray, psi: np.ndarray) -> float:
	return float(max(phi.min(axis=1).max(), psi.min(axis=1).max()))


def _smooth(phi: np.ndarray, psi: np.ndarray, params: CbfParams) -> Tuple[float, np.ndarray, np.ndarray]:
	"""hhat and its partials with respect to every phi[k, l] and psi[k, l], in shifted log-domain."""
	kappa = params.kappa
	r_phi, c_phi = phi.shape
	r_psi, c_psi = psi.shape
	scaled = np.full((r_phi + r_psi, max(c_phi, c_psi)), -np.inf)
	scaled[:r_phi, :c_phi] = -kappa * phi
	scaled[r_phi:, :c_psi] = -kappa * psi
	# padding adds exp(-inf) = 0 to its row, so every row sees only its own components
	row_lse = np.logaddexp.reduce(scaled, axis=1, keepdims=True)
	outer = -row_lse[:, 0]
	total = float(np.logaddexp.reduce(outer))
	w = np.exp(outer - total)[:, None] * np.exp(scaled - row_lse)
	return (total - params.buffer_b) / kappa, w[:r_phi, :c_phi], w[r_phi:, :c_psi]


def smooth_h(table: ComponentTable, params: CbfParams) -> BarrierEval:
	"""Log-sum-exp surrogate of h_a with its gradient, from the full gradient tables."""
	value, w_phi, w_psi = _smooth(table.phi, table.psi, params)
	grad = np.tensordot(w_phi, table.grad_phi, axes=2) + np.tensordot(w_psi, table.grad_psi, axes=2)
	weights = np.concatenate([w_phi.ravel(), w_psi.ravel()])
	return BarrierEval(value, grad[:table.n_i], grad[table.n_i:], weights, _max_min(table.phi, table.psi))


def smooth_h_naive(table: ComponentTable, params: CbfParams) -> float:
	"""Direct unshifted evaluation; overflows for large kappa*phi."""
	kappa = params.kappa
	outer = 0.0
	for comps in (table.phi, table.psi):
		for row in comps:
			outer += 1.0 / np.sum(1.0 / np.exp(kappa * row))
	return float(math.log(outer) / kappa - params.buffer_b / kappa)


def error_bound(params: CbfParams, r_i: int, r_j: int) -> Tuple[float, float]:
	"""(lower, upper) margins with h_a - lower <= hhat <= h_a + upper."""
	if r_i < 3 or r_j < 3:
		raise ParameterError(f"edge counts must be >= 3, got ({r_i}, {r_j})")
	b1 = r_i + r_j
	b2 = max(r_i, r_j)
	return (math.log(b2) + params.buffer_b) / params.kappa, (math.log(b1) - params.buffer_b) / params.kappa


@dataclass(frozen=True)
class PairState:
	i: PosedShape
	j: PosedShape

	@classmethod
	def rigid(
		cls,
		shapes: Tuple[RigidPolygonShape, RigidPolygonShape],
		pose_i: PlanarPose,
		pose_j: PlanarPose,
		translation_only: bool = False,
	) -> "PairState":
		return cls(
			PosedShape.rigid(shapes[0], pose_i, translation_only),
			PosedShape.rigid(shapes[1], pose_j, translation_only),
		)

	def table(self) -> ComponentTable:
		return component_table(self.i, self.j)

	def evaluate(self, params: CbfParams, table: Optional[ComponentTable] = None) -> BarrierEval:
		return smooth_h(table if table is not None else self.table(), params)


@dataclass(frozen=True)
class RigidPair:
	"""Two posed rigid bodies with states (p, theta); hhat and its gradient without gradient tables.

	phi[k, l] = A_k·(v_l - p_i) - n_k·l_k, with A_k = R(theta_i) n_k, so each component
	gradient is [-A_k, (B A_k)·(v_l - p_i), A_k, A_k·B(v_l - p_j)] and the weighted sum
	collapses to a few products. Matches PairState.rigid(...).evaluate to rounding.
	"""

	polygon_i: ConvexPolygon
	polygon_j: ConvexPolygon
	pose_i: PlanarPose
	pose_j: PlanarPose

	@classmethod
	def at(
		cls,
		shapes: Tuple[RigidPolygonShape, RigidPolygonShape],
		pose_i: PlanarPose,
		pose_j: PlanarPose,
	) -> "RigidPair":
		return cls(polygon_from_pose(shapes[0], pose_i), polygon_from_pose(shapes[1], pose_j), pose_i, pose_j)

	def evaluate(self, params: CbfParams, translation_only: bool = False) -> BarrierEval:
		"""Gradients in (p_x, p_y, theta) per body, or (p_x, p_y) when translation_only."""
		pi, pj = self.polygon_i, self.polygon_j
		phi = pi.normals @ pj.vertices.T - pi.offsets[:, None]
		psi = pj.normals @ pi.vertices.T - pj.offsets[:, None]
		value, w_phi, w_psi = _smooth(phi, psi, params)

		# d/dp_j; d/dp_i is its negative
		push = w_phi.sum(axis=1) @ pi.normals - w_psi.sum(axis=1) @ pj.normals
		if translation_only:
			grad_xi, grad_xj = -push, push
		else:
			rel_i = pi.vertices - self.pose_i.p
			rel_j = pj.vertices - self.pose_j.p
			turn_i = float(
				np.sum((pi.normals @ B.T) * (w_phi @ (pj.vertices - self.pose_i.p)))
				+ np.sum((w_psi.T @ pj.normals) * (rel_i @ B.T))
			)
			turn_j = float(
				np.sum((pj.normals @ B.T) * (w_psi @ (pi.vertices - self.pose_j.p)))
				+ np.sum((w_phi.T @ pi.normals) * (rel_j @ B.T))
			)
			grad_xi = np.array([-push[0], -push[1], turn_i])
			grad_xj = np.array([push[0], push[1], turn_j])
		weights = np.concatenate([w_phi.ravel(), w_psi.ravel()])
		return BarrierEval(value, grad_xi, grad_xj, weights, _max_min(phi, psi))
