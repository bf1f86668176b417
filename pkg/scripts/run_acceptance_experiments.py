"""Run every experiment config in scripts/configs and write the reports.

    python3 scripts/run_acceptance_experiments.py --output-dir results --plot
"""

import argparse
import json
import sys
import time
from pathlib import Path

from polyatree.harness import ExperimentConfig, run_experiment, summarize, write_report

CONFIGS = Path(__file__).resolve().parent / "configs"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--output-dir", default=None, help="default: POLYATREE_OUTPUT_DIR or the config's output")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--plot", action="store_true")
    parser.add_argument("names", nargs="*", help="config names without .json (default: all)")
    args = parser.parse_args(argv)
    names = args.names or sorted(p.stem for p in CONFIGS.glob("*.json"))
    for name in names:
        cfg = ExperimentConfig.load(CONFIGS / f"{name}.json")
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "workers": args.workers, "plot": args.plot})
        start = time.perf_counter()
        rows = run_experiment(cfg)
        summary = summarize(cfg, rows)
        paths = write_report(cfg, rows, summary, args.output_dir)
        print(f"{name}: {len(rows)} rows in {time.perf_counter() - start:.1f}s -> {paths['rows']}")
        print("  " + json.dumps(summary["checks"], sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
