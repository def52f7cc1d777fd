import csv
import logging
import math
import os
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .barrier import CbfParams, RigidPair
from .baseline import BaselineConfig, baseline_h_and_gradient
from .config import parse_filter_mode
from .errors import ParameterError
from .geometry import PlanarPose, RigidPolygonShape, polygon_from_pose
from .sdf import separation_margin

logger = logging.getLogger(__name__)

MIN_BENCH_STATES = 1000

PosePair = Tuple[PlanarPose, PlanarPose]


def sample_pose_pairs(
	rng: np.random.Generator,
	count: int,
	shapes: Tuple[RigidPolygonShape, RigidPolygonShape],
	box: float = 6.0,
	separated: Optional[bool] = None,
) -> List[PosePair]:
	"""Uniform positions in [-box, box]^2 and headings in [-pi, pi).

	separated=True keeps only disjoint pairs, False only overlapping ones, None keeps all.
	"""
	out: List[PosePair] = []
	budget = 200 * count + 1000
	while len(out) < count:
		budget -= 1
		if budget < 0:
			raise ParameterError(f"could not draw {count} pose pairs with separated={separated} inside box {box}")
		xy = rng.uniform(-box, box, size=4)
		th = rng.uniform(-math.pi, math.pi, size=2)
		pose_i, pose_j = PlanarPose(xy[:2], th[0]), PlanarPose(xy[2:], th[1])
		if separated is not None:
			margin = separation_margin(polygon_from_pose(shapes[0], pose_i), polygon_from_pose(shapes[1], pose_j))
			if (margin > 0) != separated:
				continue
		out.append((pose_i, pose_j))
	return out


@dataclass
class BenchRow:
	method: str
	evaluations: int
	mean_us: float
	median_us: float
	total_s: float
	speedup_of_proposed: Optional[float] = None


def _evaluator(
	method: str,
	shapes: Tuple[RigidPolygonShape, RigidPolygonShape],
	params: CbfParams,
) -> Callable[[PlanarPose, PlanarPose], object]:
	mode, density = parse_filter_mode(method)
	if mode == "proposed":
		return lambda a, b: RigidPair.at(shapes, a, b).evaluate(params)
	if mode == "baseline":
		cfg = BaselineConfig(density)
		return lambda a, b: baseline_h_and_gradient(a, b, shapes, cfg)
	raise ParameterError(f"cannot benchmark filter mode {method!r}")


def run_benchmark(
	states: Sequence[PosePair],
	methods: Sequence[str],
	repeats: int,
	shapes: Tuple[RigidPolygonShape, RigidPolygonShape],
	params: CbfParams,
) -> List[BenchRow]:
	"""Per-call wall time of value plus gradient for each method, in one process, one call at a time."""
	if len(states) < MIN_BENCH_STATES:
		raise ParameterError(f"benchmark needs at least {MIN_BENCH_STATES} states, got {len(states)}")
	if repeats < 1:
		raise ParameterError(f"repeats must be >= 1, got {repeats}")
	rows: List[BenchRow] = []
	for method in methods:
		fn = _evaluator(method, shapes, params)
		times: List[float] = []
		for _ in range(repeats):
			for a, b in states:
				start = time.perf_counter()
				fn(a, b)
				times.append(time.perf_counter() - start)
		rows.append(BenchRow(
			method=method,
			evaluations=len(times),
			mean_us=statistics.mean(times) * 1e6,
			median_us=statistics.median(times) * 1e6,
			total_s=float(sum(times)),
		))
		logger.info(f"{method}: mean {rows[-1].mean_us:.1f}us, median {rows[-1].median_us:.1f}us over {len(times)} calls")

	proposed = next((r for r in rows if r.method == "proposed"), None)
	if proposed is not None:
		for r in rows:
			r.speedup_of_proposed = r.mean_us / proposed.mean_us
	return rows


def write_bench_csv(rows: Sequence[BenchRow], path: str) -> None:
	os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
	fieldnames = ["method", "evaluations", "mean_us", "median_us", "total_s", "speedup_of_proposed"]
	with open(path, "w", encoding="utf-8", newline="") as f:
		writer = csv.DictWriter(f, fieldnames=fieldnames)
		writer.writeheader()
		for r in rows:
			writer.writerow(asdict(r))
