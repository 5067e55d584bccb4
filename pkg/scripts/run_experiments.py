"""Run every spec in scripts/specs (or the ones given) and print a one-line summary each.

    python3 scripts/run_experiments.py --out results/
    python3 scripts/run_experiments.py scripts/specs/grid_s1_t1.spec --out results/
"""
import argparse
import json
import time
from pathlib import Path

from furstlab.harness import load_spec, run_experiment

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("specs", nargs="*", type=Path)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    specs = args.specs or sorted((HERE / "specs").glob("*.spec"))
    for path in specs:
        if "kind" not in path.read_text():
            continue  # generator-only specs are for `furstlab generate`
        spec = load_spec(path)
        t0 = time.perf_counter()
        summary = run_experiment(spec, args.out)
        fit = summary.get("fit", {}).get("slope")
        short = {k: v for k, v in summary.items() if not isinstance(v, (dict, list))}
        print(f"{spec.name:24s} {time.perf_counter() - t0:6.1f}s slope={fit}", json.dumps(short, sort_keys=True))


if __name__ == "__main__":
    main()
