import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .barrier import RigidPair
from .baseline import TIE_BREAK_RULE, baseline_h_and_gradient
from .config import ScenarioConfig
from .constants import APPROACH_FRACTION, BOUNDARY_ZONE, FILTER_SPLIT, TRAJECTORY_SCHEMA
from .dynamics import (
	crane_derivative,
	crane_pd_controller,
	rk4_step,
	unicycle_derivative,
	unicycle_input_matrix,
	unicycle_tracking_controller,
)
from .errors import (
	DegenerateConstraintError,
	GeometryError,
	OverlapError,
	ScenarioAbort,
	SingularGradientError,
)
from .filters import crane_barrier, crane_pair, filter_control_affine, filter_crane
from .geometry import PlanarPose
from .sdf import signed_distance_value

logger = logging.getLogger(__name__)

VEHICLE_COLUMNS = {
	"states": ("px_i", "py_i", "theta_i", "px_j", "py_j", "theta_j"),
	"nominal": ("v0_i", "w0_i", "v0_j", "w0_j"),
	"filtered": ("v_i", "w_i", "v_j", "w_j"),
	"agents": ("i", "j"),
}
CRANE_COLUMNS = {
	"states": ("y", "z", "theta", "y_dot", "z_dot", "theta_dot", "obs_y", "obs_z"),
	"nominal": ("uy0", "uz0"),
	"filtered": ("uy", "uz"),
	"agents": ("i",),
}


@dataclass
class Trajectory:
	kind: str
	t: np.ndarray
	states: np.ndarray
	u_nominal: np.ndarray
	u_filtered: np.ndarray
	hhat: np.ndarray
	h_a: np.ndarray
	h_s: np.ndarray
	eta: np.ndarray
	active: np.ndarray
	events: List[str]

	@property
	def layout(self) -> Dict[str, Tuple[str, ...]]:
		return VEHICLE_COLUMNS if self.kind == "vehicles" else CRANE_COLUMNS

	def column_names(self) -> List[str]:
		lay = self.layout
		return (
			["t"]
			+ list(lay["states"])
			+ list(lay["nominal"])
			+ list(lay["filtered"])
			+ ["hhat", "h_a", "h_s"]
			+ [f"eta_{a}" for a in lay["agents"]]
			+ [f"active_{a}" for a in lay["agents"]]
			+ ["event"]
		)

	def __len__(self) -> int:
		return int(self.t.shape[0])


@dataclass
class RunSummary:
	scenario: str
	kind: str
	filter: str
	steps: int
	min_h_s: float
	argmin_h_s_t: float
	min_h_a: float
	argmin_h_a_t: float
	min_hhat: float
	argmin_hhat_t: float
	first_collision_t: Optional[float]
	collision_intervals: List[Tuple[float, float]]
	first_activation_t: Optional[float]
	earliest_activation_t: Optional[float]
	barrier_eval_calls: int
	barrier_eval_total_s: float
	barrier_eval_mean_s: float
	min_boundary_grad_norm: Optional[float]
	eps_distortion_steps: int
	failure_events: int
	metadata: Dict[str, Any] = field(default_factory=dict)
	config: Dict[str, Any] = field(default_factory=dict)

	@property
	def collided(self) -> bool:
		return self.first_collision_t is not None

	def to_dict(self) -> Dict[str, Any]:
		return asdict(self)


class _Recorder:
	def __init__(self) -> None:
		self.rows: Dict[str, list] = {k: [] for k in ("t", "states", "u0", "u", "hhat", "h_a", "h_s", "eta", "active")}
		self.events: List[str] = []
		self.eval_times: List[float] = []
		self.min_grad: Optional[float] = None
		self.eps_steps = 0
		self.failures = 0
		self.earliest_active: Optional[float] = None
		self.first_active: Optional[float] = None
		self.approach_gap: Optional[float] = None

	def add(self, t, states, u0, u, barrier, h_s, eta, active, event) -> None:
		r = self.rows
		r["t"].append(t)
		r["states"].append(np.asarray(states, dtype=float))
		r["u0"].append(np.asarray(u0, dtype=float))
		r["u"].append(np.asarray(u, dtype=float))
		r["hhat"].append(barrier.value)
		r["h_a"].append(barrier.h_a)
		r["h_s"].append(h_s)
		r["eta"].append(np.asarray(eta, dtype=float))
		r["active"].append(np.asarray(active, dtype=bool))
		self.events.append(event)
		if abs(barrier.value) <= BOUNDARY_ZONE:
			norm = float(np.linalg.norm(barrier.grad))
			self.min_grad = norm if self.min_grad is None else min(self.min_grad, norm)
		if self.approach_gap is None:
			self.approach_gap = APPROACH_FRACTION * h_s if h_s > 0 else math.inf
		if self.first_active is None and np.any(active):
			if self.earliest_active is None:
				self.earliest_active = t
				logger.debug(f"filter first active at t={t:.3f}s (h_s={h_s:.3f})")
			if h_s <= self.approach_gap:
				self.first_active = t
				logger.info(f"filter first active on approach at t={t:.3f}s (h_s={h_s:.3f})")

	def trajectory(self, kind: str) -> Trajectory:
		r = self.rows
		return Trajectory(
			kind=kind,
			t=np.array(r["t"]),
			states=np.vstack(r["states"]),
			u_nominal=np.vstack(r["u0"]),
			u_filtered=np.vstack(r["u"]),
			hhat=np.array(r["hhat"]),
			h_a=np.array(r["h_a"]),
			h_s=np.array(r["h_s"]),
			eta=np.vstack(r["eta"]),
			active=np.vstack(r["active"]),
			events=list(self.events),
		)


def _two_unicycles(x: np.ndarray, u: np.ndarray) -> np.ndarray:
	return np.concatenate([unicycle_derivative(x[:3], u[:2]), unicycle_derivative(x[3:], u[2:])])


def _step_count(cfg: ScenarioConfig) -> int:
	return int(round(cfg.duration / cfg.dt))


def _run_vehicles(cfg: ScenarioConfig, rec: _Recorder) -> None:
	veh = cfg.vehicles
	shapes = cfg.shapes
	filter_cfg = cfg.filter_config
	x = np.concatenate([veh.i.x0, veh.j.x0])
	n_steps = _step_count(cfg)
	drift = (np.zeros(3), np.zeros(3))
	nan2 = np.full(2, np.nan)

	for step in range(n_steps + 1):
		t = step * cfg.dt
		started = time.perf_counter()
		try:
			pose_i, pose_j = PlanarPose.from_state(x[:3]), PlanarPose.from_state(x[3:])
			pair = RigidPair.at(shapes, pose_i, pose_j)
			barrier = pair.evaluate(cfg.cbf)
		except GeometryError as e:
			raise ScenarioAbort(str(e), step) from e
		elapsed = time.perf_counter() - started
		h_s = signed_distance_value(pair.polygon_i, pair.polygon_j, barrier.h_a)

		pd_i, pd_dot_i = veh.i.reference(t)
		pd_j, pd_dot_j = veh.j.reference(t)
		u0 = (
			unicycle_tracking_controller(x[:3], pd_i, pd_dot_i, veh.i.gain, veh.l_offset),
			unicycle_tracking_controller(x[3:], pd_j, pd_dot_j, veh.j.gain, veh.l_offset),
		)
		g = (unicycle_input_matrix(x[2]), unicycle_input_matrix(x[5]))
		u, eta, active, event = u0, nan2, np.zeros(2, dtype=bool), ""

		if cfg.filter_mode == "proposed":
			try:
				res = filter_control_affine(drift, g, u0, barrier, filter_cfg, g_full_rank=True)
				u, eta, active = res.u_star, res.eta, res.active
				if res.eps_distortion:
					rec.eps_steps += 1
					logger.debug(f"step {step}: epsilon moved u* by more than the distortion threshold")
			except SingularGradientError as e:
				event = "singular_gradient"
				rec.failures += 1
				logger.warning(f"t={t:.3f}s: {e}; passing nominal input through")
		elif cfg.filter_mode == "baseline":
			started = time.perf_counter()
			try:
				ev = baseline_h_and_gradient(pose_i, pose_j, shapes, cfg.baseline)
				elapsed = time.perf_counter() - started
				res = filter_control_affine(drift, g, u0, ev, filter_cfg, g_full_rank=True)
				u, eta, active = res.u_star, res.eta, res.active
			except OverlapError as e:
				elapsed = time.perf_counter() - started
				event = "baseline_overlap"
				rec.failures += 1
				logger.warning(f"t={t:.3f}s: baseline undefined ({e}); passing nominal input through")
		rec.eval_times.append(elapsed)

		u_vec = np.concatenate(u)
		rec.add(t, x, np.concatenate(u0), u_vec, barrier, h_s, eta, active, event)
		if step == n_steps:
			break
		x = rk4_step(_two_unicycles, x, u_vec, cfg.dt)


def _run_crane(cfg: ScenarioConfig, rec: _Recorder) -> None:
	crane = cfg.crane
	model = crane.model
	shapes = cfg.shapes
	q = crane.q0.copy()
	n_steps = _step_count(cfg)

	def derivative(state: np.ndarray, u: np.ndarray) -> np.ndarray:
		return crane_derivative(state, u, model)

	for step in range(n_steps + 1):
		t = step * cfg.dt
		if not abs(q[2]) < math.pi / 2:
			raise ScenarioAbort(f"swing angle {q[2]:.3f} rad left the model's valid range", step)
		center = crane.obstacle_center + crane.obstacle_velocity * t
		started = time.perf_counter()
		try:
			pair = crane_pair(q, center, shapes, model)
			barrier = pair.evaluate(cfg.cbf, translation_only=True)
		except GeometryError as e:
			raise ScenarioAbort(str(e), step) from e
		rec.eval_times.append(time.perf_counter() - started)
		h_s = signed_distance_value(pair.polygon_i, pair.polygon_j, barrier.h_a)

		u0 = crane_pd_controller(q, crane.target, crane.Kp, crane.Kd, crane.lam, model)
		u, eta, active, event = u0, np.full(1, np.nan), np.zeros(1, dtype=bool), ""
		if cfg.filter_mode == "proposed":
			try:
				res = filter_crane(u0, q, center, crane.obstacle_velocity, shapes, cfg.cbf, crane.filter, model, barrier)
				u, eta, active = res.u_star[0], res.eta, res.active
				if res.eps_distortion:
					rec.eps_steps += 1
			except DegenerateConstraintError as e:
				event = "degenerate_constraint"
				rec.failures += 1
				logger.warning(f"t={t:.3f}s: {e}; passing nominal input through")

		rec.add(t, np.concatenate([q, center]), u0, u, barrier, h_s, eta, active, event)
		if step == n_steps:
			break
		q = rk4_step(derivative, q, u, cfg.dt)


def _collision_intervals(t: np.ndarray, h_s: np.ndarray) -> List[Tuple[float, float]]:
	out: List[Tuple[float, float]] = []
	start = None
	for k, inside in enumerate(h_s < 0):
		if inside and start is None:
			start = float(t[k])
		elif not inside and start is not None:
			out.append((start, float(t[k - 1])))
			start = None
	if start is not None:
		out.append((start, float(t[-1])))
	return out


def _plain(value: Any) -> Any:
	if isinstance(value, np.ndarray):
		return value.tolist()
	if isinstance(value, dict):
		return {k: _plain(v) for k, v in value.items()}
	if isinstance(value, (list, tuple)):
		return [_plain(v) for v in value]
	if isinstance(value, np.generic):
		return value.item()
	return value


def config_echo(cfg: ScenarioConfig) -> Dict[str, Any]:
	echo: Dict[str, Any] = {
		"name": cfg.name,
		"kind": cfg.kind,
		"dt": cfg.dt,
		"duration": cfg.duration,
		"filter": cfg.filter_label,
		"shapes": list(cfg.shape_paths),
		"cbf": asdict(cfg.cbf),
		"seed": cfg.seed,
	}
	if cfg.vehicles is not None:
		echo["vehicles"] = asdict(cfg.vehicles)
	if cfg.crane is not None:
		echo["crane"] = asdict(cfg.crane)
	return _plain(echo)


def summarize(cfg: ScenarioConfig, traj: Trajectory, rec: _Recorder) -> RunSummary:
	def arg(series: np.ndarray) -> Tuple[float, float]:
		k = int(np.argmin(series))
		return float(series[k]), float(traj.t[k])

	min_hs, t_hs = arg(traj.h_s)
	min_ha, t_ha = arg(traj.h_a)
	min_hh, t_hh = arg(traj.hhat)
	intervals = _collision_intervals(traj.t, traj.h_s)
	calls = len(rec.eval_times)
	total = float(sum(rec.eval_times))
	return RunSummary(
		scenario=cfg.name,
		kind=cfg.kind,
		filter=cfg.filter_label,
		steps=len(traj),
		min_h_s=min_hs,
		argmin_h_s_t=t_hs,
		min_h_a=min_ha,
		argmin_h_a_t=t_ha,
		min_hhat=min_hh,
		argmin_hhat_t=t_hh,
		first_collision_t=intervals[0][0] if intervals else None,
		collision_intervals=intervals,
		first_activation_t=rec.first_active,
		earliest_activation_t=rec.earliest_active,
		barrier_eval_calls=calls,
		barrier_eval_total_s=total,
		barrier_eval_mean_s=total / calls if calls else 0.0,
		min_boundary_grad_norm=rec.min_grad,
		eps_distortion_steps=rec.eps_steps,
		failure_events=rec.failures,
		metadata={
			"schema": TRAJECTORY_SCHEMA,
			"filter_split": FILTER_SPLIT,
			"baseline_tie_break": TIE_BREAK_RULE,
			"baseline_filter_settings": "same alpha, split and epsilon as the proposed filter",
		},
		config=config_echo(cfg),
	)


def _fmt(value: Any) -> str:
	if isinstance(value, (bool, np.bool_)):
		return "1" if value else "0"
	if isinstance(value, str):
		return value
	return repr(float(value))


def write_trajectory_csv(traj: Trajectory, path: str) -> None:
	os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
	with open(path, "w", encoding="utf-8", newline="") as f:
		f.write(f"# {TRAJECTORY_SCHEMA}\n")
		writer = csv.writer(f)
		writer.writerow(traj.column_names())
		for k in range(len(traj)):
			row = (
				[traj.t[k]]
				+ list(traj.states[k])
				+ list(traj.u_nominal[k])
				+ list(traj.u_filtered[k])
				+ [traj.hhat[k], traj.h_a[k], traj.h_s[k]]
				+ list(traj.eta[k])
				+ list(traj.active[k])
				+ [traj.events[k]]
			)
			writer.writerow([_fmt(v) for v in row])


def write_summary_json(summary: RunSummary, path: str) -> None:
	os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
	with open(path, "w", encoding="utf-8") as f:
		json.dump(_plain(summary.to_dict()), f, indent=2)
		f.write("\n")


def output_paths(cfg: ScenarioConfig) -> Tuple[str, str]:
	base = os.path.join(cfg.out_dir, cfg.name)
	return os.path.join(base, "trajectory.csv"), os.path.join(base, "summary.json")


def run_scenario(cfg: ScenarioConfig, write: bool = True) -> Tuple[Trajectory, RunSummary]:
	"""Simulate the configured scenario; the loop has no randomness, so equal configs give equal trajectories."""
	logger.info(f"{cfg.name}: {cfg.kind}, filter={cfg.filter_label}, dt={cfg.dt}, duration={cfg.duration}s")
	if cfg.kind == "vehicles" and cfg.filter_mode != "off":
		cfg.cbf.require_under_approximation(cfg.shapes[0].r, cfg.shapes[1].r)
	rec = _Recorder()
	if cfg.kind == "vehicles":
		_run_vehicles(cfg, rec)
	else:
		_run_crane(cfg, rec)
	traj = rec.trajectory(cfg.kind)
	summary = summarize(cfg, traj, rec)

	if summary.collided:
		logger.info(f"{cfg.name}: first collision at t={summary.first_collision_t:.3f}s")
	logger.info(
		f"{cfg.name}: min h_s={summary.min_h_s:.4f} at t={summary.argmin_h_s_t:.3f}s, "
		f"min hhat={summary.min_hhat:.4f}, barrier eval mean {summary.barrier_eval_mean_s * 1e6:.1f}us "
		f"over {summary.barrier_eval_calls} calls, {summary.failure_events} failure event(s)"
	)
	if write:
		csv_path, json_path = output_paths(cfg)
		write_trajectory_csv(traj, csv_path)
		write_summary_json(summary, json_path)
		logger.info(f"{cfg.name}: wrote {csv_path} and {json_path}")
	return traj, summary


def recompute_hhat(traj: Trajectory, cfg: ScenarioConfig) -> np.ndarray:
	"""hhat recomputed from the logged states only."""
	out = np.empty(len(traj))
	for k, row in enumerate(traj.states):
		if traj.kind == "vehicles":
			pair = RigidPair.at(cfg.shapes, PlanarPose.from_state(row[:3]), PlanarPose.from_state(row[3:6]))
			out[k] = pair.evaluate(cfg.cbf).value
		else:
			out[k] = crane_barrier(row[:6], row[6:8], cfg.shapes, cfg.cbf, cfg.crane.model).value
	return out
