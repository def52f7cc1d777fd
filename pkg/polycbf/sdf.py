from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import OverlapError, ParameterError
from .geometry import ConvexPolygon, minkowski_hull


@dataclass(frozen=True)
class SdfResult:
	"""Signed distance between two polygons with one witness point on each."""

	value: float
	witness_i: np.ndarray
	witness_j: np.ndarray

	@property
	def distance(self) -> float:
		return max(self.value, 0.0)

	@property
	def penetration(self) -> float:
		return max(-self.value, 0.0)


def _segment_projection(point: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
	"""Clamped projection parameter and distance from point to every segment."""
	seg = ends - starts
	denom = np.einsum("ij,ij->i", seg, seg)
	t = np.clip(np.einsum("ij,ij->i", point - starts, seg) / denom, 0.0, 1.0)
	closest = starts + t[:, None] * seg
	return t, np.linalg.norm(point - closest, axis=1)


def distance_point_to_boundary(point, poly: ConvexPolygon) -> float:
	x = np.asarray(point, dtype=float)
	_, dist = _segment_projection(x, poly.vertices, np.roll(poly.vertices, -1, axis=0))
	return float(np.min(dist))


def signed_distance(pi: ConvexPolygon, pj: ConvexPolygon) -> SdfResult:
	"""Exact signed distance via the origin's distance to the boundary of pj - pi."""
	hull, pairs = minkowski_hull(pi, pj)
	nxt = np.roll(np.arange(hull.shape[0]), -1)
	t, dist = _segment_projection(np.zeros(2), hull, hull[nxt])
	edge = int(np.argmin(dist))
	d = float(dist[edge])

	# origin inside iff it satisfies every edge halfspace of the clockwise hull
	seg = hull[nxt] - hull
	inside = bool(np.all(seg[:, 0] * hull[:, 1] - seg[:, 1] * hull[:, 0] >= 0.0))
	value = -d if inside and d > 0.0 else d

	s = float(t[edge])
	(ka, la), (kb, lb) = pairs[edge], pairs[nxt[edge]]
	witness_i = (1.0 - s) * pi.vertices[ka] + s * pi.vertices[kb]
	witness_j = (1.0 - s) * pj.vertices[la] + s * pj.vertices[lb]
	return SdfResult(value, witness_i, witness_j)


def separation_margin(pi: ConvexPolygon, pj: ConvexPolygon) -> float:
	"""Largest vertex gap across any edge normal of either polygon; positive iff disjoint."""
	phi = pi.normals @ pj.vertices.T - pi.offsets[:, None]
	psi = pj.normals @ pi.vertices.T - pj.offsets[:, None]
	return float(max(phi.min(axis=1).max(), psi.min(axis=1).max()))


def sample_boundary(poly: ConvexPolygon, samples_per_edge: int) -> np.ndarray:
	"""Uniform samples along each edge, endpoints included, shared corners kept once."""
	if samples_per_edge < 2:
		raise ParameterError(f"samples_per_edge must be >= 2, got {samples_per_edge}")
	t = np.linspace(0.0, 1.0, samples_per_edge)[:-1]
	starts = poly.vertices
	seg = np.roll(starts, -1, axis=0) - starts
	return (starts[:, None, :] + t[None, :, None] * seg[:, None, :]).reshape(-1, 2)


def nearest_boundary_points(pi: ConvexPolygon, pj: ConvexPolygon, samples_per_edge: int) -> Tuple[np.ndarray, np.ndarray]:
	"""Closest pair among sampled boundary points; ties go to the lowest (i, j) sample index."""
	si = sample_boundary(pi, samples_per_edge)
	sj = sample_boundary(pj, samples_per_edge)
	if separation_margin(pi, pj) <= 0.0:
		raise OverlapError("polygons overlap or touch; no nearest-point direction exists")
	d2 = np.sum((si[:, None, :] - sj[None, :, :]) ** 2, axis=2)
	a, b = np.unravel_index(int(np.argmin(d2)), d2.shape)
	return si[a].copy(), sj[b].copy()


def _vertex_edge_distance(points: np.ndarray, vertices: np.ndarray) -> float:
	"""Smallest distance from any of points to any edge of the closed chain vertices."""
	seg = np.roll(vertices, -1, axis=0) - vertices
	rel = points[:, None, :] - vertices[None, :, :]
	t = np.clip(np.einsum("mrc,rc->mr", rel, seg) / np.einsum("rc,rc->r", seg, seg), 0.0, 1.0)
	gap = rel - t[:, :, None] * seg[None, :, :]
	return float(np.sqrt(np.min(np.einsum("mrc,mrc->mr", gap, gap))))


def signed_distance_value(pi: ConvexPolygon, pj: ConvexPolygon, margin: Optional[float] = None) -> float:
	"""signed_distance(pi, pj).value without building the Minkowski hull.

	Overlapping convex polygons penetrate by exactly their separation margin. Disjoint ones
	are closest between a vertex of one and an edge of the other. margin, when the caller
	already has separation_margin(pi, pj), skips recomputing it.
	"""
	if margin is None:
		margin = separation_margin(pi, pj)
	if margin <= 0.0:
		return float(margin)
	return min(_vertex_edge_distance(pi.vertices, pj.vertices), _vertex_edge_distance(pj.vertices, pi.vertices))
