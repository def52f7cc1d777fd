import glob
import json
import math
import os
import sys
import tempfile

import yaml

from polycbf.cli import main as cli_main
from polycbf.cli import parse_counts
from polycbf.config import apply_overrides, load_scenario_config, parse_filter_mode, scenario_from_dict
from polycbf.errors import ConfigError

HERE = os.path.dirname(os.path.abspath(__file__))
SCENARIOS = os.path.join(HERE, "scenarios")
SMALL_COUNTS = "sign_equivalence=50,minkowski=10,sandwich=50,gradient=10,filters=20,crane_dual=20,jacobians=5,sdf_symmetry=10"


def _raw(name: str) -> dict:
	with open(os.path.join(SCENARIOS, f"{name}.yaml"), "r", encoding="utf-8") as f:
		return yaml.safe_load(f)


def _expect_config_error(fn) -> None:
	try:
		fn()
	except ConfigError:
		return
	raise AssertionError("expected ConfigError")


def test_all_scenarios_load():
	paths = sorted(glob.glob(os.path.join(SCENARIOS, "*.yaml")))
	assert len(paths) == 8
	for path in paths:
		cfg = load_scenario_config(path)
		assert cfg.name == os.path.splitext(os.path.basename(path))[0]
		assert cfg.kind in ("vehicles", "crane")
		assert (cfg.vehicles is None) == (cfg.kind == "crane")


def test_vehicle_buffers_keep_under_approximation():
	for path in sorted(glob.glob(os.path.join(SCENARIOS, "*.yaml"))):
		cfg = load_scenario_config(path)
		if cfg.kind != "vehicles":
			continue
		assert cfg.cbf.buffer_b >= math.log(7), f"{cfg.name}: buffer {cfg.cbf.buffer_b!r} < ln 7"
		cfg.cbf.require_under_approximation(cfg.shapes[0].r, cfg.shapes[1].r)


def test_scenario_values():
	cfg = load_scenario_config(os.path.join(SCENARIOS, "fig5a_kappa5.yaml"))
	assert cfg.filter_mode == "proposed"
	assert cfg.cbf.kappa == 5.0
	assert abs(cfg.cbf.buffer_b - math.log(7)) < 1e-15
	assert cfg.vehicles.alpha == 5.0 and cfg.vehicles.l_offset == 0.1
	assert cfg.shapes[0].r == 3 and cfg.shapes[1].r == 4

	nominal = load_scenario_config(os.path.join(SCENARIOS, "fig4_nominal.yaml"))
	assert nominal.filter_mode == "off"

	base = load_scenario_config(os.path.join(SCENARIOS, "fig8_baseline_10.yaml"))
	assert base.filter_label == "baseline:10"

	crane = load_scenario_config(os.path.join(SCENARIOS, "fig9b_filtered.yaml"))
	assert crane.crane.filter.Q[0, 0] == 1000.0 and crane.crane.filter.Q[1, 1] == 2.0
	assert crane.crane.lam == -0.01
	assert crane.crane.model.l == 0.7


def test_unknown_and_missing_keys():
	data = _raw("fig5a_kappa5")
	data["kapa"] = 5.0
	_expect_config_error(lambda: scenario_from_dict(data, SCENARIOS))
	data = _raw("fig5a_kappa5")
	del data["vehicles"]["alpha"]
	_expect_config_error(lambda: scenario_from_dict(data, SCENARIOS))
	data = _raw("fig9b_filtered")
	data["crane"]["Q"] = [1.0, -1.0]
	_expect_config_error(lambda: scenario_from_dict(data, SCENARIOS))
	data = _raw("fig9a_nominal")
	data["filter"] = "baseline:20"
	_expect_config_error(lambda: scenario_from_dict(data, SCENARIOS))
	data = _raw("fig4_nominal")
	data["shapes"]["i"] = "missing.json"
	_expect_config_error(lambda: scenario_from_dict(data, SCENARIOS))


def test_filter_mode_parsing():
	assert parse_filter_mode("off") == ("off", None)
	assert parse_filter_mode(False) == ("off", None)
	assert parse_filter_mode("Proposed") == ("proposed", None)
	assert parse_filter_mode("baseline:15") == ("baseline", 15)
	for bad in ("baseline", "baseline:x", "proposed:3", "sdf"):
		_expect_config_error(lambda: parse_filter_mode(bad))


def test_overrides_win_over_file():
	cfg = load_scenario_config(os.path.join(SCENARIOS, "fig5a_kappa5.yaml"))
	out = apply_overrides(cfg, dt=0.01, duration=1.0, kappa=1.0, filter_mode="baseline:20", out_dir="elsewhere", seed=7)
	assert out.dt == 0.01 and out.duration == 1.0
	assert out.cbf.kappa == 1.0 and out.cbf.buffer_b == cfg.cbf.buffer_b
	assert out.filter_label == "baseline:20"
	assert out.out_dir == "elsewhere" and out.seed == 7
	assert cfg.dt == 0.001
	_expect_config_error(lambda: apply_overrides(cfg, dt=-1.0))
	_expect_config_error(lambda: apply_overrides(cfg, kappa=0.0))


def test_parse_counts():
	assert parse_counts(None) == {}
	assert parse_counts("gradient=10, sandwich=20") == {"gradient": 10, "sandwich": 20}


def test_cli_run_writes_outputs():
	with tempfile.TemporaryDirectory() as tmp:
		code = cli_main(["run", os.path.join(SCENARIOS, "fig5a_kappa5.yaml"), "--duration", "0.2", "--out", tmp])
		assert code == 0
		base = os.path.join(tmp, "fig5a_kappa5")
		assert os.path.exists(os.path.join(base, "trajectory.csv"))
		with open(os.path.join(base, "summary.json"), "r", encoding="utf-8") as f:
			summary = json.load(f)
		assert summary["steps"] == 201
		assert summary["config"]["duration"] == 0.2


def test_cli_reports_config_errors():
	with tempfile.TemporaryDirectory() as tmp:
		assert cli_main(["run", os.path.join(tmp, "nope.yaml")]) == 2
		assert cli_main(["run", os.path.join(SCENARIOS, "fig9a_nominal.yaml"), "--filter", "baseline:10", "--out", tmp]) == 2


def test_cli_verify_writes_report():
	with tempfile.TemporaryDirectory() as tmp:
		code = cli_main(["verify", os.path.join(SCENARIOS, "fig5a_kappa5.yaml"), "--counts", SMALL_COUNTS, "--out", tmp])
		assert code == 0
		with open(os.path.join(tmp, "verify.json"), "r", encoding="utf-8") as f:
			report = json.load(f)
		assert report["passed"] is True
		assert report["seed"] == 0
		assert len(report["checks"]) > 8


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
	print("\nAll config and CLI tests passed.")


if __name__ == "__main__":
	main()
