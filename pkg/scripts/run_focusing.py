"""Run the VP and RVP focusing experiments and write all artifacts.

    python scripts/run_focusing.py --out runs/ [--grid 64x64x16] [--dt-frac 0.000244140625]
"""
import argparse
import sys
from pathlib import Path

from vpfocus.cli import parse_grid
from vpfocus.harness import ExperimentSpec, emit, run_experiment
from vpfocus.initdata import TargetSpec


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("runs"))
    ap.add_argument("--grid", type=parse_grid, default=(64, 64, 16))
    ap.add_argument("--dt-frac", type=float, default=1 / 4096)
    ap.add_argument("--kinds", nargs="+", default=["vp", "rvp"])
    args = ap.parse_args()
    targets = TargetSpec(1.0, 10.0, 1.0, 2.0, 3.0)
    worst = 0
    for kind in args.kinds:
        spec = ExperimentSpec(kind, targets, grid=args.grid, dt_fraction=args.dt_frac, out_dir=args.out / kind)
        rep = run_experiment(spec)
        sys.stdout.write(emit(rep, "text"))
        print(f"  evolve {rep.timing.get('evolve_s', float('nan')):.1f} s, artifacts in {spec.out_dir}\n")
        worst = max(worst, rep.exit_code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
