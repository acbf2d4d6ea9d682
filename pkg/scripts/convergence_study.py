"""Step-size study for the focusing runs: energy drift and forward-backward
error against dt_fraction and the close-approach cap eta.

    python scripts/convergence_study.py --kind vp --grid 32x32x8
"""
import argparse
import time

import numpy as np

from vpfocus.cli import parse_grid
from vpfocus.dynamics import IntegratorConfig, evolve, total_energy
from vpfocus.initdata import TargetSpec, derive_parameters, sample_ensemble


def one(ens, T, dt_frac, eta):
    cfg = IntegratorConfig(dt=T * dt_frac, eta=eta)
    steps = [0]
    t0 = time.perf_counter()
    fwd, _ = evolve(ens, T, cfg, observer=lambda e: steps.__setitem__(0, steps[0] + 1))
    back, _ = evolve(fwd, 0.0, cfg)
    wall = time.perf_counter() - t0
    E0, E1 = total_energy(ens), total_energy(fwd)
    rev = float(np.max(np.abs(back.r - ens.r) / ens.r))
    return steps[0], abs(E1 - E0) / abs(E0), rev, wall


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--kind", default="vp", choices=["vp", "rvp"])
    ap.add_argument("--grid", type=parse_grid, default=(32, 32, 8))
    ap.add_argument("--dt-fracs", type=float, nargs="+", default=[1 / 1024, 1 / 2048, 1 / 4096])
    ap.add_argument("--etas", type=float, nargs="+", default=[0.0, 0.02, 0.01, 0.005])
    args = ap.parse_args()
    p = derive_parameters(args.kind, TargetSpec(1.0, 10.0, 1.0, 2.0, 3.0))
    ens = sample_ensemble(p, args.grid)
    print(f"{args.kind}: {len(ens)} shells, T = {p.T:.6g}")
    print(f"{'dt/T':>10}{'eta':>8}{'steps':>8}{'drift':>12}{'fwd-bwd':>12}{'wall s':>9}")
    for frac in args.dt_fracs:
        for eta in args.etas:
            steps, drift, rev, wall = one(ens, p.T, frac, eta or None)
            print(f"{frac:>10.3g}{eta:>8.3g}{steps:>8d}{drift:>12.3e}{rev:>12.3e}{wall:>9.1f}")


if __name__ == "__main__":
    main()
