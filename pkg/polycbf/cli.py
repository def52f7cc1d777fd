import argparse
import json
import logging
import os
import sys
from datetime import datetime
from typing import Dict, List, Optional

import numpy as np

from .bench import run_benchmark, sample_pose_pairs, write_bench_csv
from .config import apply_overrides, load_env, load_scenario_config, setup_logging
from .errors import PolyCbfError, ScenarioAbort
from .simulate import run_scenario
from .verify import run_property_suite

logger = logging.getLogger("polycbf")

DEFAULT_VERIFY_CONFIG = os.path.join("scenarios", "fig5a_kappa5.yaml")


def parse_counts(text: Optional[str]) -> Dict[str, int]:
	"""'sign_equivalence=500,gradient=100' -> dict."""
	counts: Dict[str, int] = {}
	if not text:
		return counts
	for part in text.split(","):
		name, _, value = part.partition("=")
		if not value:
			raise argparse.ArgumentTypeError(f"expected name=count, got {part!r}")
		counts[name.strip()] = int(value)
	return counts


def _add_common(p: argparse.ArgumentParser) -> None:
	p.add_argument("--out", default=None, help="Output directory (overrides the config file and POLYCBF_OUT_DIR)")
	p.add_argument("--debug", action="store_true", help="Verbose logging")


def build_parser() -> argparse.ArgumentParser:
	parser = argparse.ArgumentParser(description="Smooth polygon CBF scenario runner")
	sub = parser.add_subparsers(dest="command", required=True)

	run = sub.add_parser("run", help="Simulate one scenario and write trajectory.csv and summary.json")
	run.add_argument("config", help="Scenario YAML/JSON file")
	run.add_argument("--dt", type=float, default=None, help="Integration step in seconds")
	run.add_argument("--duration", type=float, default=None, help="Simulated time in seconds")
	run.add_argument("--kappa", type=float, default=None, help="Smoothing sharpness")
	run.add_argument("--buffer", type=float, default=None, help="Smoothing buffer b")
	run.add_argument("--filter", dest="filter_mode", default=None, help="off | proposed | baseline:N")
	_add_common(run)

	bench = sub.add_parser("bench", help="Time barrier evaluation per method")
	bench.add_argument("config", help="Scenario file providing shapes, CBF params and the bench section")
	bench.add_argument("--seed", type=int, default=None)
	bench.add_argument("--states", type=int, default=None, help="Number of sampled pose pairs")
	bench.add_argument("--repeats", type=int, default=None)
	_add_common(bench)

	verify = sub.add_parser("verify", help="Run the sampled property suite")
	verify.add_argument("config", nargs="?", default=DEFAULT_VERIFY_CONFIG, help="Scenario file providing the shapes")
	verify.add_argument("--seed", type=int, default=0)
	verify.add_argument("--counts", type=parse_counts, default=None, help="Per-check sample counts, name=N,...")
	_add_common(verify)
	return parser


def _cmd_run(args: argparse.Namespace) -> int:
	cfg = apply_overrides(
		load_scenario_config(args.config),
		dt=args.dt,
		duration=args.duration,
		kappa=args.kappa,
		buffer=args.buffer,
		filter_mode=args.filter_mode,
		out_dir=args.out,
		debug=args.debug,
	)
	setup_logging(cfg.debug)
	start = datetime.now()
	_, summary = run_scenario(cfg)
	logger.info(f"{cfg.name}: done in {(datetime.now() - start).total_seconds():.1f}s")
	if summary.collided and cfg.filter_mode == "proposed":
		logger.error(f"{cfg.name}: collision at t={summary.first_collision_t:.3f}s despite the filter")
		return 1
	return 0


def _cmd_bench(args: argparse.Namespace) -> int:
	cfg = apply_overrides(load_scenario_config(args.config), out_dir=args.out, seed=args.seed, debug=args.debug)
	setup_logging(cfg.debug)
	count = args.states or cfg.bench.states
	repeats = args.repeats or cfg.bench.repeats
	rng = np.random.default_rng(cfg.seed)
	states = sample_pose_pairs(rng, count, cfg.shapes, box=cfg.bench.box, separated=True)
	logger.info(f"benchmarking {', '.join(cfg.bench.methods)} on {count} separated pose pairs x {repeats}")
	rows = run_benchmark(states, cfg.bench.methods, repeats, cfg.shapes, cfg.cbf)
	path = os.path.join(cfg.out_dir, cfg.name, "bench.csv")
	write_bench_csv(rows, path)
	logger.info(f"wrote {path}")
	return 0


def _cmd_verify(args: argparse.Namespace) -> int:
	cfg = apply_overrides(load_scenario_config(args.config), out_dir=args.out, debug=args.debug)
	setup_logging(cfg.debug)
	report = run_property_suite(cfg.shapes, seed=args.seed, counts=args.counts)
	path = os.path.join(cfg.out_dir, "verify.json")
	os.makedirs(cfg.out_dir, exist_ok=True)
	with open(path, "w", encoding="utf-8") as f:
		json.dump(report.to_dict(), f, indent=2)
	logger.info(f"wrote {path}")
	return 0 if report.passed else 1


def main(argv: Optional[List[str]] = None) -> int:
	load_env()
	args = build_parser().parse_args(argv)
	setup_logging(args.debug)
	handlers = {"run": _cmd_run, "bench": _cmd_bench, "verify": _cmd_verify}
	try:
		return handlers[args.command](args)
	except ScenarioAbort as e:
		logger.error(f"run aborted at {e}")
		return 2
	except PolyCbfError as e:
		logger.error(str(e))
		return 2


if __name__ == "__main__":
	sys.exit(main())
