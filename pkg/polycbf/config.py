import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np
import yaml
from dotenv import load_dotenv

from .barrier import CbfParams
from .baseline import BaselineConfig
from .constants import DEFAULT_EPSILON
from .dynamics import CraneModel, EllipseReference
from .errors import ConfigError, GeometryError, ModelError, ParameterError
from .filters import CraneFilterConfig, FilterConfig
from .geometry import RigidPolygonShape, load_shape

KINDS = ("vehicles", "crane")
FILTER_MODES = ("off", "proposed", "baseline")


def load_env() -> None:
	"""Load environment variables from .env if present."""
	load_dotenv(override=False)


def setup_logging(debug: bool = False) -> None:
	level_name = "DEBUG" if debug else os.getenv("POLYCBF_LOG_LEVEL", "INFO").upper()
	level = getattr(logging, level_name, logging.INFO)
	root = logging.getLogger()
	if not root.handlers:
		handler = logging.StreamHandler()
		handler.setFormatter(logging.Formatter("[%(asctime)s] [%(levelname)s] %(message)s", datefmt="%H:%M:%S"))
		root.addHandler(handler)
	root.setLevel(level)


def get_default_out_dir() -> str:
	return os.getenv("POLYCBF_OUT_DIR", "out")


def parse_filter_mode(text: str) -> Tuple[str, Optional[int]]:
	"""'off', 'proposed' or 'baseline:N'."""
	if text is False:
		# unquoted `off` in YAML
		text = "off"
	mode, _, density = str(text).strip().lower().partition(":")
	if mode not in FILTER_MODES:
		raise ConfigError(f"filter must be one of off, proposed, baseline:N; got {text!r}")
	if mode == "baseline":
		if not density:
			raise ConfigError("baseline filter needs a density, e.g. baseline:20")
		try:
			return mode, int(density)
		except ValueError:
			raise ConfigError(f"baseline density must be an integer, got {density!r}")
	if density:
		raise ConfigError(f"filter {mode!r} takes no density")
	return mode, None


@dataclass(frozen=True)
class VehicleAgent:
	x0: np.ndarray
	gain: np.ndarray
	reference: EllipseReference


@dataclass(frozen=True)
class VehicleSetup:
	i: VehicleAgent
	j: VehicleAgent
	alpha: float
	l_offset: float


@dataclass(frozen=True)
class CraneSetup:
	model: CraneModel
	q0: np.ndarray
	target: np.ndarray
	Kp: np.ndarray
	Kd: np.ndarray
	lam: float
	obstacle_center: np.ndarray
	obstacle_velocity: np.ndarray
	filter: CraneFilterConfig


@dataclass(frozen=True)
class BenchSetup:
	states: int = 1000
	repeats: int = 3
	box: float = 6.0
	methods: Tuple[str, ...] = ("proposed", "baseline:10", "baseline:15", "baseline:20")


@dataclass(frozen=True)
class ScenarioConfig:
	name: str
	kind: str
	shapes: Tuple[RigidPolygonShape, RigidPolygonShape]
	shape_paths: Tuple[str, str]
	cbf: CbfParams
	dt: float
	duration: float
	filter_mode: str = "off"
	baseline: Optional[BaselineConfig] = None
	vehicles: Optional[VehicleSetup] = None
	crane: Optional[CraneSetup] = None
	bench: BenchSetup = field(default_factory=BenchSetup)
	out_dir: str = "out"
	seed: int = 0
	debug: bool = False

	@property
	def filter_label(self) -> str:
		if self.filter_mode == "baseline" and self.baseline is not None:
			return f"baseline:{self.baseline.samples_per_edge}"
		return self.filter_mode

	@property
	def filter_config(self) -> FilterConfig:
		if self.vehicles is None:
			raise ConfigError(f"{self.name}: only vehicle scenarios use the split filter")
		return FilterConfig(self.vehicles.alpha, self.cbf.epsilon)


def _take(data: Dict[str, Any], where: str, required: Tuple[str, ...], optional: Tuple[str, ...] = ()) -> Dict[str, Any]:
	if not isinstance(data, dict):
		raise ConfigError(f"{where} must be a mapping")
	unknown = sorted(set(data) - set(required) - set(optional))
	if unknown:
		raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
	missing = [k for k in required if k not in data]
	if missing:
		raise ConfigError(f"{where}: missing key(s) {', '.join(missing)}")
	return data


def _vector(value: Any, size: int, where: str) -> np.ndarray:
	arr = np.asarray(value, dtype=float)
	if arr.shape != (size,) or not np.all(np.isfinite(arr)):
		raise ConfigError(f"{where} must be a list of {size} finite numbers, got {value!r}")
	return arr


def _matrix(value: Any, where: str) -> np.ndarray:
	arr = np.asarray(value, dtype=float)
	if arr.ndim == 1:
		arr = np.diag(arr)
	if arr.shape != (2, 2) or not np.all(np.isfinite(arr)):
		raise ConfigError(f"{where} must be a 2x2 matrix or a 2-entry diagonal, got {value!r}")
	return arr


def _positive(value: Any, where: str) -> float:
	try:
		x = float(value)
	except (TypeError, ValueError):
		raise ConfigError(f"{where} must be a number, got {value!r}")
	if not x > 0:
		raise ConfigError(f"{where} must be positive, got {value!r}")
	return x


def _vehicle_agent(data: Dict[str, Any], where: str) -> VehicleAgent:
	_take(data, where, ("x0", "reference"), ("gain",))
	ref = _take(data["reference"], f"{where}.reference", ("ax", "ay", "rate"), ("phase",))
	return VehicleAgent(
		x0=_vector(data["x0"], 3, f"{where}.x0"),
		gain=_matrix(data.get("gain", [1.0, 1.0]), f"{where}.gain"),
		reference=EllipseReference(float(ref["ax"]), float(ref["ay"]), float(ref["rate"]), float(ref.get("phase", 0.0))),
	)


def _vehicles(data: Dict[str, Any]) -> VehicleSetup:
	_take(data, "vehicles", ("i", "j", "alpha", "l_offset"))
	l_offset = float(data["l_offset"])
	if l_offset == 0:
		raise ConfigError("vehicles.l_offset must be nonzero")
	return VehicleSetup(
		i=_vehicle_agent(data["i"], "vehicles.i"),
		j=_vehicle_agent(data["j"], "vehicles.j"),
		alpha=_positive(data["alpha"], "vehicles.alpha"),
		l_offset=l_offset,
	)


def _crane(data: Dict[str, Any]) -> CraneSetup:
	_take(data, "crane", ("q0", "target", "Kp", "Kd", "lambda", "obstacle", "Q", "alpha", "eta"), ("model",))
	obstacle = _take(data["obstacle"], "crane.obstacle", ("center", "velocity"))
	try:
		model = CraneModel(**_take(data.get("model", {}), "crane.model", (), ("M", "m", "g", "l")))
		filt = CraneFilterConfig(_matrix(data["Q"], "crane.Q"), _positive(data["alpha"], "crane.alpha"), _positive(data["eta"], "crane.eta"))
	except (ModelError, ParameterError) as e:
		raise ConfigError(f"crane: {e}") from e
	return CraneSetup(
		model=model,
		q0=_vector(data["q0"], 6, "crane.q0"),
		target=_vector(data["target"], 2, "crane.target"),
		Kp=_matrix(data["Kp"], "crane.Kp"),
		Kd=_matrix(data["Kd"], "crane.Kd"),
		lam=float(data["lambda"]),
		obstacle_center=_vector(obstacle["center"], 2, "crane.obstacle.center"),
		obstacle_velocity=_vector(obstacle["velocity"], 2, "crane.obstacle.velocity"),
		filter=filt,
	)


def _bench(data: Dict[str, Any]) -> BenchSetup:
	_take(data, "bench", (), ("states", "repeats", "box", "methods"))
	base = BenchSetup()
	methods = tuple(str(m) for m in data.get("methods", base.methods))
	for m in methods:
		parse_filter_mode(m)
	return BenchSetup(
		states=int(data.get("states", base.states)),
		repeats=int(data.get("repeats", base.repeats)),
		box=_positive(data.get("box", base.box), "bench.box"),
		methods=methods,
	)


def _load_shape(path: str, base_dir: str, where: str) -> Tuple[RigidPolygonShape, str]:
	full = path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))
	if not os.path.exists(full):
		raise ConfigError(f"{where}: shape file {full} does not exist")
	try:
		return load_shape(full), full
	except GeometryError as e:
		raise ConfigError(f"{where}: {full}: {e}") from e


def scenario_from_dict(data: Dict[str, Any], base_dir: str = ".") -> ScenarioConfig:
	_take(
		data,
		"scenario",
		("name", "kind", "shapes", "cbf", "dt", "duration"),
		("filter", "vehicles", "crane", "bench", "out_dir", "seed", "debug"),
	)
	kind = str(data["kind"])
	if kind not in KINDS:
		raise ConfigError(f"kind must be one of {', '.join(KINDS)}, got {kind!r}")
	shapes_raw = _take(data["shapes"], "shapes", ("i", "j"))
	shape_i, path_i = _load_shape(str(shapes_raw["i"]), base_dir, "shapes.i")
	shape_j, path_j = _load_shape(str(shapes_raw["j"]), base_dir, "shapes.j")

	cbf_raw = _take(data["cbf"], "cbf", ("kappa", "buffer"), ("epsilon",))
	try:
		cbf = CbfParams(float(cbf_raw["kappa"]), float(cbf_raw["buffer"]), float(cbf_raw.get("epsilon", DEFAULT_EPSILON)))
	except (ParameterError, TypeError, ValueError) as e:
		raise ConfigError(f"cbf: {e}") from e

	mode, density = parse_filter_mode(data.get("filter", "off"))
	if kind not in data:
		raise ConfigError(f"a {kind} scenario needs a '{kind}' section")
	if kind == "crane" and mode == "baseline":
		raise ConfigError("the sampled baseline is only defined for the vehicle scenario")

	return ScenarioConfig(
		name=str(data["name"]),
		kind=kind,
		shapes=(shape_i, shape_j),
		shape_paths=(path_i, path_j),
		cbf=cbf,
		dt=_positive(data["dt"], "dt"),
		duration=_positive(data["duration"], "duration"),
		filter_mode=mode,
		baseline=BaselineConfig(density) if density is not None else None,
		vehicles=_vehicles(data["vehicles"]) if kind == "vehicles" else None,
		crane=_crane(data["crane"]) if kind == "crane" else None,
		bench=_bench(data.get("bench", {})),
		out_dir=str(data.get("out_dir", get_default_out_dir())),
		seed=int(data.get("seed", 0)),
		debug=bool(data.get("debug", False)),
	)


def load_scenario_config(config_path: str) -> ScenarioConfig:
	"""Read a YAML (or JSON) scenario file; relative shape paths resolve against its directory."""
	if not os.path.exists(config_path):
		raise ConfigError(f"config file {config_path} does not exist")
	with open(config_path, "r", encoding="utf-8") as f:
		try:
			data = yaml.safe_load(f) or {}
		except yaml.YAMLError as e:
			raise ConfigError(f"{config_path}: {e}") from e
	if not isinstance(data, dict):
		raise ConfigError(f"{config_path} must hold a mapping")
	return scenario_from_dict(data, os.path.dirname(os.path.abspath(config_path)))


def apply_overrides(
	cfg: ScenarioConfig,
	dt: Optional[float] = None,
	duration: Optional[float] = None,
	kappa: Optional[float] = None,
	buffer: Optional[float] = None,
	filter_mode: Optional[str] = None,
	out_dir: Optional[str] = None,
	seed: Optional[int] = None,
	debug: Optional[bool] = None,
) -> ScenarioConfig:
	"""CLI flags win over the file."""
	changes: Dict[str, Any] = {}
	if dt is not None:
		changes["dt"] = _positive(dt, "--dt")
	if duration is not None:
		changes["duration"] = _positive(duration, "--duration")
	if kappa is not None or buffer is not None:
		try:
			changes["cbf"] = replace(
				cfg.cbf,
				kappa=cfg.cbf.kappa if kappa is None else float(kappa),
				buffer_b=cfg.cbf.buffer_b if buffer is None else float(buffer),
			)
		except ParameterError as e:
			raise ConfigError(str(e)) from e
	if filter_mode is not None:
		mode, density = parse_filter_mode(filter_mode)
		if cfg.kind == "crane" and mode == "baseline":
			raise ConfigError("the sampled baseline is only defined for the vehicle scenario")
		changes["filter_mode"] = mode
		changes["baseline"] = BaselineConfig(density) if density is not None else None
	if out_dir is not None:
		changes["out_dir"] = out_dir
	if seed is not None:
		changes["seed"] = int(seed)
	if debug:
		changes["debug"] = True
	return replace(cfg, **changes) if changes else cfg
