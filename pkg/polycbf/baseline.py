import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import OverlapError, ParameterError
from .filters import FilterConfig, FilterResult, filter_control_affine
from .geometry import PlanarPose, RigidPolygonShape, polygon_from_pose, rotation
from .sdf import nearest_boundary_points

# Sampled pairs at equal distance resolve to the lowest (sample on i, sample on j) index.
TIE_BREAK_RULE = "lowest-index sample pair"


@dataclass(frozen=True)
class BaselineConfig:
	samples_per_edge: int = 20

	def __post_init__(self) -> None:
		if int(self.samples_per_edge) != self.samples_per_edge or self.samples_per_edge < 2:
			raise ParameterError(f"samples_per_edge must be an integer >= 2, got {self.samples_per_edge!r}")


@dataclass(frozen=True)
class BaselineEval:
	"""Distance linearised at the nearest sampled boundary pair."""

	value: float
	grad_xi: np.ndarray
	grad_xj: np.ndarray
	witness_i: np.ndarray
	witness_j: np.ndarray


def baseline_h_and_gradient(
	pose_i: PlanarPose,
	pose_j: PlanarPose,
	shapes: Tuple[RigidPolygonShape, RigidPolygonShape],
	cfg: BaselineConfig,
) -> BaselineEval:
	poly_i = polygon_from_pose(shapes[0], pose_i)
	poly_j = polygon_from_pose(shapes[1], pose_j)
	w_i, w_j = nearest_boundary_points(poly_i, poly_j, cfg.samples_per_edge)
	gap = w_j - w_i
	dist = float(np.linalg.norm(gap))
	if dist == 0.0:
		raise OverlapError("nearest sampled boundary points coincide")
	a = gap / dist

	g_i = rotation(pose_i.theta).T @ (w_i - pose_i.p)
	g_j = rotation(pose_j.theta).T @ (w_j - pose_j.p)
	grad_xi = -np.array([a[0], a[1], float(a @ rotation(pose_i.theta + math.pi / 2) @ g_i)])
	grad_xj = np.array([a[0], a[1], float(a @ rotation(pose_j.theta + math.pi / 2) @ g_j)])
	return BaselineEval(float(a @ gap), grad_xi, grad_xj, w_i, w_j)


def baseline_filter_step(
	f: Sequence[np.ndarray],
	g: Sequence[np.ndarray],
	u0: Sequence[np.ndarray],
	pose_i: PlanarPose,
	pose_j: PlanarPose,
	shapes: Tuple[RigidPolygonShape, RigidPolygonShape],
	cfg: BaselineConfig,
	filter_cfg: FilterConfig,
) -> Tuple[FilterResult, BaselineEval]:
	"""The control-affine filter with the sampled-distance barrier in place of hhat.

	Raises OverlapError when the polygons intersect; the caller decides what to pass through.
	"""
	ev = baseline_h_and_gradient(pose_i, pose_j, shapes, cfg)
	return filter_control_affine(f, g, u0, ev, filter_cfg), ev
