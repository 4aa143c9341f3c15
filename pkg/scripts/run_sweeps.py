#!/usr/bin/env python3
"""Reproduce the four experiment sweeps and write one CSV per sweep.

Full-fidelity runs (10 repetitions, 10 eval seeds x 1e5 demands) take a few
hours on a laptop; ``--quick`` drops to a smoke-scale pass in a few minutes.

    python scripts/run_sweeps.py --out-dir results [--quick] [--jobs 2]

Plot the CSVs afterwards with the frontend:

    cd frontend && npm run plot -- ../results/*.csv --out-dir ../figures
"""
import argparse
from pathlib import Path

from fedadm.agents import LearningParams
from fedadm.harness import DEFAULT_GRIDS, ExperimentSpec, run_sweep
from fedadm.model import load_config

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=str(ROOT / "configs" / "default.json"))
    parser.add_argument("--out-dir", default=str(ROOT / "results"))
    parser.add_argument("--jobs", type=int, default=2)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--quick", action="store_true",
                        help="3 repetitions, 3 eval seeds, 2e4 demands")
    args = parser.parse_args()

    config = load_config(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    overrides = {}
    if args.quick:
        overrides = dict(repetitions=3, eval_demands=20_000, eval_seeds=3)

    for kind in DEFAULT_GRIDS:
        spec = ExperimentSpec(
            kind=kind,
            base_config=config,
            seed_base=args.seed,
            learning=LearningParams(),
            **overrides,
        )
        out = out_dir / f"{kind}.csv"
        print(f"== sweep {kind} -> {out}")
        run_sweep(spec, out_path=out, jobs=args.jobs, verbose=True)


if __name__ == "__main__":
    main()
