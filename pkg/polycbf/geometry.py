import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .constants import GEOM_TOL, UNIT_NORM_TOL
from .errors import GeometryError


def rotation(theta: float) -> np.ndarray:
	"""Counter-clockwise rotation by theta."""
	c, s = math.cos(theta), math.sin(theta)
	return np.array([[c, -s], [s, c]])


# Quarter turn; maps a clockwise edge direction to its outward normal.
B = np.array([[0.0, -1.0], [1.0, 0.0]])


def _frozen(values, dtype=float) -> np.ndarray:
	arr = np.array(values, dtype=dtype)
	arr.setflags(write=False)
	return arr


def _as_points(points) -> np.ndarray:
	arr = np.asarray(points, dtype=float)
	if arr.ndim != 2 or arr.shape[1] != 2:
		raise GeometryError("shape", f"expected an (r, 2) array of points, got shape {arr.shape}")
	return arr


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
	return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def halfspace_signed_distance(point, normal, offset: float) -> float:
	"""Signed distance from a point to the halfspace {x : normal·x <= offset} (unit normal)."""
	return float(np.dot(normal, point) - offset)


@dataclass(frozen=True)
class ConvexPolygon:
	"""Convex polygon in both halfspace form (normals, offsets) and clockwise vertex form."""

	normals: np.ndarray
	offsets: np.ndarray
	vertices: np.ndarray

	def __post_init__(self) -> None:
		object.__setattr__(self, "normals", _frozen(self.normals))
		object.__setattr__(self, "offsets", _frozen(self.offsets))
		object.__setattr__(self, "vertices", _frozen(self.vertices))

	@property
	def r(self) -> int:
		return int(self.vertices.shape[0])

	@classmethod
	def from_vertices(cls, vertices, validate: bool = True) -> "ConvexPolygon":
		v = _as_points(vertices)
		if v.shape[0] < 3:
			raise GeometryError("vertex_count", f"need at least 3 vertices, got {v.shape[0]}")
		edges = np.roll(v, -1, axis=0) - v
		lengths = np.linalg.norm(edges, axis=1)
		if np.any(lengths <= GEOM_TOL):
			k = int(np.argmin(lengths))
			raise GeometryError("edge_length", f"edge {k} has length {lengths[k]:.3g}")
		normals = (edges @ B.T) / lengths[:, None]
		offsets = np.einsum("ij,ij->i", normals, v)
		poly = cls(normals, offsets, v)
		if validate:
			poly.validate()
		return poly

	def validate(self) -> None:
		"""Raise GeometryError naming the first violated invariant."""
		v, n, b = self.vertices, self.normals, self.offsets
		r = v.shape[0] if v.ndim == 2 else 0
		if v.ndim != 2 or v.shape[1] != 2 or r < 3:
			raise GeometryError("vertex_count", f"need an (r, 2) vertex array with r >= 3, got {v.shape}")
		if n.shape != (r, 2) or b.shape != (r,):
			raise GeometryError("shape_mismatch", f"{r} vertices but normals {n.shape} and offsets {b.shape}")
		if not (np.all(np.isfinite(v)) and np.all(np.isfinite(n)) and np.all(np.isfinite(b))):
			raise GeometryError("finite", "polygon data contains NaN or inf")
		norms = np.linalg.norm(n, axis=1)
		bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
		if bad.size:
			raise GeometryError("unit_normal", f"normal {bad[0]} has norm {norms[bad[0]]!r}")
		edges = np.roll(v, -1, axis=0) - v
		lengths = np.linalg.norm(edges, axis=1)
		if np.any(lengths <= GEOM_TOL):
			raise GeometryError("edge_length", f"edge {int(np.argmin(lengths))} is degenerate")
		area2 = float(np.sum(_cross(v, np.roll(v, -1, axis=0))))
		if area2 >= 0.0:
			raise GeometryError("clockwise", f"vertices are not clockwise (signed double area {area2:.3g})")
		nxt = np.roll(edges, -1, axis=0)
		turns = _cross(edges, nxt)
		bad = np.flatnonzero(turns >= -GEOM_TOL)
		if bad.size:
			raise GeometryError("strict_convexity", f"vertex {(bad[0] + 1) % r} is reflex or collinear")
		winding = float(np.sum(np.arctan2(turns, np.einsum("ij,ij->i", edges, nxt))))
		if abs(winding + 2.0 * math.pi) > 1e-6:
			raise GeometryError("simple", f"boundary winds {winding / (2 * math.pi):.3f} turns")
		slack = n @ v.T - b[:, None]
		if np.any(slack > GEOM_TOL):
			k, l = np.unravel_index(int(np.argmax(slack)), slack.shape)
			raise GeometryError("containment", f"vertex {l} lies outside halfspace {k} by {slack[k, l]:.3g}")
		idx = np.arange(r)
		tight = np.abs(slack) <= GEOM_TOL * max(1.0, float(np.max(np.abs(v))))
		if not (np.all(tight[idx, idx]) and np.all(tight[idx, (idx + 1) % r])):
			raise GeometryError("edge_support", "halfspace rows do not match the vertex edges")

	def contains(self, point) -> bool:
		return bool(np.all(self.normals @ np.asarray(point, dtype=float) - self.offsets <= GEOM_TOL))


@dataclass(frozen=True)
class RigidPolygonShape:
	"""Body-frame vertices l_k of a polygon attached to a planar pose, clockwise.

	The body polygon is validated once here. Posed copies are rotations and
	translations of it, so they inherit every invariant without re-checking.
	"""

	body_vertices: np.ndarray
	body: ConvexPolygon = field(init=False, repr=False, compare=False)

	def __post_init__(self) -> None:
		v = _frozen(_as_points(self.body_vertices))
		object.__setattr__(self, "body", ConvexPolygon.from_vertices(v))
		object.__setattr__(self, "body_vertices", v)

	@property
	def r(self) -> int:
		return int(self.body_vertices.shape[0])


@dataclass(frozen=True)
class PlanarPose:
	p: np.ndarray
	theta: float = 0.0

	def __post_init__(self) -> None:
		p = _frozen(self.p)
		if p.shape != (2,):
			raise GeometryError("pose", f"position must be a 2-vector, got shape {p.shape}")
		if not (np.all(np.isfinite(p)) and math.isfinite(self.theta)):
			raise GeometryError("finite", "pose contains NaN or inf")
		object.__setattr__(self, "p", p)
		object.__setattr__(self, "theta", float(self.theta))

	@classmethod
	def from_state(cls, x: Sequence[float]) -> "PlanarPose":
		return cls(np.asarray(x[:2], dtype=float), float(x[2]))


@dataclass(frozen=True)
class ShapeJacobians:
	"""Per-edge dA (r, 2, n), db (r, n) and per-vertex dv (r, 2, n) with respect to the owner's state."""

	dA: np.ndarray
	db: np.ndarray
	dv: np.ndarray
	# set by builders whose dv carries an identity block, so rank 2 holds by construction
	full_rank: bool = field(default=False, repr=False, compare=False)

	def __post_init__(self) -> None:
		for name in ("dA", "db", "dv"):
			object.__setattr__(self, name, _frozen(getattr(self, name)))
		r, n = self.db.shape
		if self.dA.shape != (r, 2, n) or self.dv.shape != (r, 2, n):
			raise GeometryError("jacobian_shape", f"dA {self.dA.shape}, db {self.db.shape}, dv {self.dv.shape}")
		if not self.full_rank and np.any(np.linalg.matrix_rank(self.dv) < 2):
			raise GeometryError("jacobian_rank", "every vertex Jacobian must have row rank 2")

	@property
	def n_state(self) -> int:
		return int(self.db.shape[1])


def polygon_from_pose(shape: RigidPolygonShape, pose: PlanarPose, validate: bool = False) -> ConvexPolygon:
	"""The body polygon moved to pose. validate=True re-runs the full invariant check."""
	Rt = rotation(pose.theta).T
	normals = shape.body.normals @ Rt
	# A_k·(p + R l_k) = (R n_k)·p + n_k·l_k
	offsets = shape.body.offsets + normals @ pose.p
	poly = ConvexPolygon(normals, offsets, pose.p + shape.body_vertices @ Rt)
	if validate:
		poly.validate()
	return poly


def _offset_jacobian(normals: np.ndarray, vertices: np.ndarray, dA: np.ndarray, dv: np.ndarray) -> np.ndarray:
	# b_k = A_k·v_k
	return np.einsum("kc,kcn->kn", normals, dv) + np.einsum("kc,kcn->kn", vertices, dA)


def shape_jacobians(
	shape: RigidPolygonShape,
	pose: PlanarPose,
	translation_only: bool = False,
	polygon: Optional[ConvexPolygon] = None,
) -> ShapeJacobians:
	"""Closed-form Jacobians for state (p_x, p_y, theta), or (p_x, p_y) when the attitude is fixed.

	polygon, when given, must be polygon_from_pose(shape, pose); it saves rebuilding it.
	"""
	poly = polygon if polygon is not None else polygon_from_pose(shape, pose)
	r = shape.r
	n = 2 if translation_only else 3
	dv = np.zeros((r, 2, n))
	dv[:, 0, 0] = 1.0
	dv[:, 1, 1] = 1.0
	dA = np.zeros((r, 2, n))
	if translation_only:
		db = poly.normals
	else:
		# d/dtheta of R x is the quarter turn of R x
		dv[:, :, 2] = (poly.vertices - pose.p) @ B.T
		dA[:, :, 2] = poly.normals @ B.T
		db = np.empty((r, 3))
		db[:, :2] = poly.normals
		db[:, 2] = np.einsum("kc,kc->k", poly.normals, dv[:, :, 2]) + np.einsum("kc,kc->k", poly.vertices, dA[:, :, 2])
	return ShapeJacobians(dA, db, dv, full_rank=True)


def _clockwise_order(positions) -> np.ndarray:
	q = _as_points(positions)
	if q.shape[0] != 3:
		raise GeometryError("agent_count", f"a formation needs 3 agents, got {q.shape[0]}")
	turn = float(_cross(q[1] - q[0], q[2] - q[1]))
	if abs(turn) <= GEOM_TOL:
		raise GeometryError("collinear", "formation agents are collinear")
	return np.array([0, 1, 2]) if turn < 0 else np.array([0, 2, 1])


def formation_polygon(agent_positions) -> ConvexPolygon:
	"""Triangle spanned by three agents. Counter-clockwise input is reordered to clockwise."""
	q = _as_points(agent_positions)
	return ConvexPolygon.from_vertices(q[_clockwise_order(q)])


def formation_jacobians(agent_positions) -> ShapeJacobians:
	"""Jacobians of formation_polygon with respect to x = (q1, q2, q3) in the caller's agent order."""
	q = _as_points(agent_positions)
	order = _clockwise_order(q)
	poly = ConvexPolygon.from_vertices(q[order])
	select = np.zeros((3, 2, 6))
	for k, agent in enumerate(order):
		select[k, :, 2 * agent:2 * agent + 2] = np.eye(2)
	dv = select
	dA = np.zeros((3, 2, 6))
	for k in range(3):
		delta = poly.vertices[(k + 1) % 3] - poly.vertices[k]
		length = float(np.linalg.norm(delta))
		u = delta / length
		d_delta = select[(k + 1) % 3] - select[k]
		dA[k] = B @ ((np.eye(2) - np.outer(u, u)) / length) @ d_delta
	db = _offset_jacobian(poly.normals, poly.vertices, dA, dv)
	return ShapeJacobians(dA, db, dv, full_rank=True)


def convex_hull(points, tol: float = GEOM_TOL) -> np.ndarray:
	"""Monotone chain; returns indices of the strict hull in counter-clockwise order."""
	pts = _as_points(points)
	order = np.lexsort((pts[:, 1], pts[:, 0]))

	def chain(indices: Iterable[int]) -> list:
		out: list = []
		for idx in indices:
			while len(out) >= 2 and float(_cross(pts[out[-1]] - pts[out[-2]], pts[idx] - pts[out[-2]])) <= tol:
				out.pop()
			out.append(int(idx))
		return out

	lower = chain(order)
	upper = chain(order[::-1])
	return np.array(lower[:-1] + upper[:-1], dtype=int)


def minkowski_hull(pi: ConvexPolygon, pj: ConvexPolygon) -> Tuple[np.ndarray, np.ndarray]:
	"""Clockwise hull of {v^j_l - v^i_k} and the (k, l) vertex pair behind each hull point."""
	diffs = (pj.vertices[None, :, :] - pi.vertices[:, None, :]).reshape(-1, 2)
	k, l = np.divmod(np.arange(diffs.shape[0]), pj.r)
	hull = convex_hull(diffs)[::-1]
	return diffs[hull], np.stack([k[hull], l[hull]], axis=1)


def minkowski_difference_vertices(pi: ConvexPolygon, pj: ConvexPolygon) -> ConvexPolygon:
	points, _ = minkowski_hull(pi, pj)
	return ConvexPolygon.from_vertices(points)


def support_value(poly: ConvexPolygon, direction) -> float:
	d = np.asarray(direction, dtype=float)
	if d.shape != (2,) or not np.all(np.isfinite(d)) or float(np.linalg.norm(d)) == 0.0:
		raise GeometryError("direction", f"support direction must be a nonzero finite 2-vector, got {direction!r}")
	return float(np.max(poly.vertices @ d))


def load_shape(path: str) -> RigidPolygonShape:
	"""Read {"vertices": [[x, y], ...]} in the body frame, clockwise."""
	with open(path, "r", encoding="utf-8") as f:
		data = json.load(f)
	if not isinstance(data, dict) or "vertices" not in data:
		raise GeometryError("shape_file", f"{path} must be an object with a 'vertices' list")
	return RigidPolygonShape(np.asarray(data["vertices"], dtype=float))
