import csv
import os
import sys
import tempfile

import numpy as np

from polycbf.barrier import CbfParams
from polycbf.bench import MIN_BENCH_STATES, run_benchmark, sample_pose_pairs, write_bench_csv
from polycbf.errors import ParameterError
from polycbf.geometry import load_shape, polygon_from_pose
from polycbf.sdf import separation_margin
from polycbf.verify import run_property_suite

HERE = os.path.dirname(os.path.abspath(__file__))
VEHICLES = (
	load_shape(os.path.join(HERE, "shapes", "vehicle_triangle.json")),
	load_shape(os.path.join(HERE, "shapes", "vehicle_trapezoid.json")),
)
SMALL = {
	"sign_equivalence": 300,
	"minkowski": 20,
	"sandwich": 300,
	"gradient": 30,
	"filters": 100,
	"crane_dual": 100,
	"jacobians": 20,
	"sdf_symmetry": 50,
}


def test_property_suite_passes_with_small_counts():
	report = run_property_suite(VEHICLES, seed=0, counts=SMALL)
	failed = [c.name for c in report.checks if not c.passed]
	assert report.passed, failed
	names = {c.name for c in report.checks}
	assert {"sign_equivalence", "smoothing_error_bound", "gradient_matches_finite_differences"} <= names
	assert {"closed_form_pair_matches_gradient_tables", "sdf_value_matches_minkowski_hull"} <= names
	scaling = next(c for c in report.checks if c.name == "smoothing_error_scales_with_inverse_kappa")
	assert 8.0 <= float(scaling.detail.split()[1]) <= 12.0, scaling.detail


def test_property_suite_is_seeded():
	a = run_property_suite(VEHICLES, seed=3, counts=SMALL).to_dict()
	b = run_property_suite(VEHICLES, seed=3, counts=SMALL).to_dict()
	assert a == b


def test_unknown_count_name():
	try:
		run_property_suite(VEHICLES, counts={"gradients": 10})
	except ParameterError:
		return
	raise AssertionError("expected ParameterError")


def test_pose_sampling_filters_by_separation():
	rng = np.random.default_rng(50)
	for flag in (True, False):
		for pose_i, pose_j in sample_pose_pairs(rng, 50, VEHICLES, box=6.0, separated=flag):
			margin = separation_margin(polygon_from_pose(VEHICLES[0], pose_i), polygon_from_pose(VEHICLES[1], pose_j))
			assert (margin > 0) == flag


def test_benchmark_needs_enough_states():
	states = sample_pose_pairs(np.random.default_rng(51), 10, VEHICLES)
	try:
		run_benchmark(states, ["proposed"], 1, VEHICLES, CbfParams(5.0, np.log(7)))
	except ParameterError:
		return
	raise AssertionError("expected ParameterError")


def test_benchmark_rows_and_csv():
	states = sample_pose_pairs(np.random.default_rng(52), MIN_BENCH_STATES, VEHICLES, box=6.0, separated=True)
	rows = run_benchmark(states, ["proposed", "baseline:20"], 1, VEHICLES, CbfParams(5.0, np.log(7)))
	assert [r.method for r in rows] == ["proposed", "baseline:20"]
	assert all(r.evaluations == MIN_BENCH_STATES for r in rows)
	assert all(r.mean_us > 0 and r.median_us > 0 for r in rows)
	assert rows[0].speedup_of_proposed == 1.0
	with tempfile.TemporaryDirectory() as tmp:
		path = os.path.join(tmp, "bench", "bench.csv")
		write_bench_csv(rows, path)
		with open(path, "r", encoding="utf-8", newline="") as f:
			read = list(csv.DictReader(f))
	assert [r["method"] for r in read] == ["proposed", "baseline:20"]
	assert float(read[1]["speedup_of_proposed"]) > 0


def test_proposed_evaluation_beats_dense_baseline():
	states = sample_pose_pairs(np.random.default_rng(53), MIN_BENCH_STATES, VEHICLES, box=6.0, separated=True)
	rows = run_benchmark(states, ["proposed", "baseline:20"], 1, VEHICLES, CbfParams(5.0, np.log(7)))
	ratio = rows[1].mean_us / rows[0].mean_us
	assert ratio > 1, f"proposed {rows[0].mean_us:.1f}us vs baseline:20 {rows[1].mean_us:.1f}us"
	assert rows[1].speedup_of_proposed == ratio


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
	print("\nAll verification and benchmark tests passed.")


if __name__ == "__main__":
	main()
