"""Command-line entry point: ``vpfocus <subcommand> [flags]``."""
from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, oracle
from .dynamics import IntegratorConfig, evolve
from .errors import DomainError, FocusError, InfeasibleError
from .initdata import TargetSpec, derive_parameters, sample_ensemble, validate_initial
from .phase import SystemKind

DEFAULTS = {
    "kind": "vp", "C1": 1.0, "C2": 10.0, "a": 1.0, "b": 2.0, "c": 3.0,
    "n_r": 64, "n_w": 64, "n_l": 16, "safety_factor": 1.0, "dt_fraction": 1.0 / 4096, "eta": None,
}
_CASTS = {"kind": str, "n_r": int, "n_w": int, "n_l": int}


def read_config(path) -> dict:
    """Flat ``key = value`` file (``#`` comments allowed)."""
    text = Path(path).read_text()
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string("[run]\n" + text)
    out = {}
    for key, raw in cp["run"].items():
        if key not in DEFAULTS:
            raise DomainError(f"unknown config key {key!r} in {path}")
        out[key] = _CASTS.get(key, float)(raw)
    return out


def parse_grid(text: str):
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"grid must look like NRxNWxNL, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def resolve(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(read_config(args.config))
    flags = {
        "kind": args.kind, "C1": args.c1, "C2": args.c2, "a": args.a, "b": args.b, "c": args.c,
        "safety_factor": args.safety, "dt_fraction": args.dt_frac, "eta": args.eta,
    }
    cfg.update({k: v for k, v in flags.items() if v is not None})
    if args.grid is not None:
        cfg["n_r"], cfg["n_w"], cfg["n_l"] = args.grid
    cfg["kind"] = SystemKind.parse(cfg["kind"])
    cfg["targets"] = TargetSpec(cfg["C1"], cfg["C2"], cfg["a"], cfg["b"], cfg["c"])
    cfg["grid"] = (cfg["n_r"], cfg["n_w"], cfg["n_l"])
    return cfg


def _common(p):
    p.add_argument("--config", type=Path, help="key=value file; flags override it")
    p.add_argument("--kind", choices=["vp", "rvp"])
    p.add_argument("--c1", type=float)
    p.add_argument("--c2", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--grid", type=parse_grid, help="NRxNWxNL, e.g. 64x64x16")
    p.add_argument("--dt-frac", type=float, help="step as a fraction of T")
    p.add_argument("--eta", type=float, help="close-approach step cap (0 disables)")
    p.add_argument("--safety", type=float, help="safety factor on a0")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--format", choices=["json", "text"], default="text")


def _print_params(params, fmt):
    d = harness._clean(params.to_dict())
    if fmt == "json":
        print(json.dumps(d, indent=2))
        return
    for k, v in d.items():
        if not isinstance(v, dict):
            print(f"{k:<16}{v}")


def cmd_derive_params(args, cfg):
    params = derive_parameters(cfg["kind"], cfg["targets"], cfg["safety_factor"])
    _print_params(params, args.format)
    if args.out:
        harness.write_params(args.out / "params.json", params)
    return 0


def cmd_build_initial(args, cfg):
    params = derive_parameters(cfg["kind"], cfg["targets"], cfg["safety_factor"])
    ens = sample_ensemble(params, cfg["grid"])
    frag = validate_initial(ens, params)
    summary = {"n_shells": len(ens), "total_mass": ens.total_mass, "truncated_mass": ens.truncated_mass,
               "validation": frag.to_dict()}
    if args.format == "json":
        print(json.dumps(harness._clean(summary), indent=2))
    else:
        print(f"shells {len(ens)}  M {ens.total_mass:.10g}  truncated {ens.truncated_mass:.3g}")
        for c in frag.checks:
            flag = "PASS" if c.passed else "FAIL"
            print(f"  {c.name:<28}{c.worst_margin:>16.6g}  {flag}{'' if c.gating else ' (info)'}")
    if args.out:
        harness.write_params(args.out / "params.json", params)
        harness.write_shells(args.out / "initial.csv", ens)
    return 0 if frag.passed else 1


def cmd_evolve(args, cfg):
    params = derive_parameters(cfg["kind"], cfg["targets"], cfg["safety_factor"])
    if args.initial:
        ens = harness.read_shells(args.initial, cfg["kind"])
    else:
        ens = sample_ensemble(params, cfg["grid"])
    t_end = params.T if args.t_end is None else args.t_end
    eta = harness.ExperimentSpec(cfg["kind"], cfg["targets"], eta=cfg["eta"]).step_cap
    icfg = IntegratorConfig(dt=params.T * cfg["dt_fraction"], eta=eta, snapshot_stride=args.stride)
    final, snaps = evolve(ens, t_end, icfg)
    print(f"t {final.t:.10g}  r in [{final.r.min():.6g}, {final.r.max():.6g}]  snapshots {len(snaps)}")
    if args.out:
        harness.write_snapshots(args.out / "snapshots.csv", ens, snaps)
        harness.write_shells(args.out / "final.csv", final)
    return 0


def cmd_check_bounds(args, cfg):
    rng = np.random.default_rng(args.seed)
    data = oracle.random_data(rng, args.n)
    results = oracle.run_suite(cfg["kind"], data)
    fails = sum(not r.passed for r in results)
    if args.format == "json":
        for r in results:
            print(json.dumps(harness._clean(r.to_dict())))
    else:
        print(f"{'r':>10}{'w':>10}{'l':>10}{'M':>8}{'T0':>12}{'T0_lo':>12}{'up_margin':>12}{'lo_margin':>12}  ok")
        for r in results:
            print(f"{r.r:>10.4g}{r.w:>10.4g}{r.l:>10.4g}{r.M:>8.3g}{r.t0_sim:>12.5g}{r.t0_lower:>12.5g}"
                  f"{r.upper_env_margin:>12.3g}{r.lower_env_margin:>12.3g}  {'y' if r.passed else 'N'}")
        print(f"{len(results) - fails}/{len(results)} passed")
    return 0 if fails == 0 else 1


def cmd_focus_experiment(args, cfg):
    spec = harness.ExperimentSpec(
        kind=cfg["kind"], targets=cfg["targets"], grid=cfg["grid"], dt_fraction=cfg["dt_fraction"],
        eta=cfg["eta"], safety_factor=cfg["safety_factor"], out_dir=args.out,
    )
    report = harness.run_experiment(spec)
    sys.stdout.write(harness.emit(report, args.format))
    return report.exit_code


def cmd_report(args, cfg):
    path = args.path or (args.out / "report.json" if args.out else None)
    if path is None:
        raise DomainError("report needs a path or --out")
    report = harness.report_from_dict(json.loads(Path(path).read_text()))
    sys.stdout.write(harness.emit(report, args.format))
    return report.exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vpfocus", description="Focusing shell experiments for VP and RVP.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("derive-params", help="derive a0, eps, T, ... for the targets")
    _common(p)
    p.set_defaults(func=cmd_derive_params)
    p = sub.add_parser("build-initial", help="sample and validate the initial shells")
    _common(p)
    p.set_defaults(func=cmd_build_initial)
    p = sub.add_parser("evolve", help="integrate the shells to T (or --t-end)")
    _common(p)
    p.add_argument("--initial", type=Path, help="initial.csv to start from")
    p.add_argument("--t-end", type=float)
    p.add_argument("--stride", type=int, default=512)
    p.set_defaults(func=cmd_evolve)
    p = sub.add_parser("check-bounds", help="random characteristics against the closed-form bounds")
    _common(p)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check_bounds)
    p = sub.add_parser("focus-experiment", help="full pipeline with theorem checks")
    _common(p)
    p.set_defaults(func=cmd_focus_experiment)
    p = sub.add_parser("report", help="re-render a saved report.json")
    _common(p)
    p.add_argument("path", nargs="?", type=Path)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        return args.func(args, cfg)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return harness.EXIT_INFEASIBLE
    except (DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, DomainError) else 3
    except FocusError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return harness.EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
