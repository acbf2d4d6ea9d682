"""End-to-end focusing experiment: derive, sample, evolve to T, check, report."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds
from .dynamics import IntegratorConfig, evolve, total_energy
from .ensemble import Ensemble
from .errors import DomainError, FocusError, InfeasibleError
from .initdata import ParameterSet, TargetSpec, derive_parameters, sample_ensemble, validate_initial
from .observables import RadialBinning, field_at, measure, write_profiles
from .phase import SystemKind

EXIT_PASS, EXIT_CHECK_FAILED, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3

# close-approach step caps that keep forward-backward error below 1e-8 at dt = T/4096
DEFAULT_ETA = {SystemKind.VP: 0.005, SystemKind.RVP: 0.01}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: SystemKind
    targets: TargetSpec
    grid: tuple = (64, 64, 16)
    dt_fraction: float = 1.0 / 4096
    eta: float | None = None  # None picks DEFAULT_ETA[kind]; 0 disables the cap
    safety_factor: float = 1.0
    n_bins: int = 64
    slack: float = 0.05
    weight_floor: float = 1e-15
    snapshot_stride: int = 512
    out_dir: Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SystemKind.parse(self.kind))
        if not (0 < self.dt_fraction <= 1e-2):
            raise DomainError(f"dt_fraction must lie in (0, 1e-2], got {self.dt_fraction}")
        if len(self.grid) != 3 or min(self.grid) < 2:
            raise DomainError(f"grid must be three dimensions >= 2, got {self.grid}")
        if self.n_bins < 1:
            raise DomainError("n_bins must be >= 1")
        if not (0 <= self.slack < 1):
            raise DomainError("slack must lie in [0, 1)")
        if self.eta is not None and not self.eta >= 0:
            raise DomainError(f"eta must be >= 0, got {self.eta}")

    @property
    def step_cap(self) -> float | None:
        if self.eta is None:
            return DEFAULT_ETA[self.kind]
        return self.eta or None


@dataclass
class TheoremCheck:
    name: str
    measured: float
    threshold: float
    relation: str
    margin: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name, "measured": _num(self.measured), "threshold": _num(self.threshold),
            "relation": self.relation, "margin": _num(self.margin), "pass": self.passed,
        }


@dataclass
class Report:
    kind: SystemKind
    targets: TargetSpec
    params: dict | None = None
    measured_mass: float | None = None
    checks: list = field(default_factory=list)
    lemma: dict = field(default_factory=dict)
    initial_validation: dict | None = None
    observables: dict = field(default_factory=dict)
    integration: dict = field(default_factory=dict)
    status: str = "ok"
    error: str | None = None
    exit_code: int = EXIT_PASS
    timing: dict = field(default_factory=dict)
    # in-memory only, never serialised
    initial: Ensemble | None = field(default=None, repr=False, compare=False)
    final: Ensemble | None = field(default=None, repr=False, compare=False)
    config: IntegratorConfig | None = field(default=None, repr=False, compare=False)

    @property
    def passed(self) -> bool:
        return self.status == "ok" and len(self.checks) == 6 and all(c.passed for c in self.checks)

    def check(self, name) -> TheoremCheck:
        return next(c for c in self.checks if c.name == name)

    def to_dict(self, timing: bool = True) -> dict:
        out = {
            "pass": self.passed,
            "status": self.status,
            "error": self.error,
            "kind": self.kind.value,
            "targets": {"C1": self.targets.C1, "C2": self.targets.C2, "a": self.targets.a,
                        "b": self.targets.b, "c": self.targets.c},
            "params": _clean(self.params),
            "measured_mass": _num(self.measured_mass),
            "checks": [c.to_dict() for c in self.checks],
            "lemma": _clean(self.lemma),
            "initial_validation": _clean(self.initial_validation),
            "observables": _clean(self.observables),
            "integration": _clean(self.integration),
        }
        if timing:
            out["timing"] = _clean(self.timing)
        return out


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None, tuples to lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, SystemKind):
        return obj.value
    return obj


def _le(name, measured, threshold):
    return TheoremCheck(name, measured, threshold, "<=", threshold - measured, bool(measured <= threshold))


def _ge(name, measured, threshold):
    return TheoremCheck(name, measured, threshold, ">=", measured - threshold, bool(measured >= threshold))


def initial_binning(params: ParameterSet, ens: Ensemble, n_bins: int) -> RadialBinning:
    lo, hi = params.a0 - params.eps, params.a0 + params.eps
    return RadialBinning.with_width(lo, hi, (hi - lo) / n_bins, ens.r)


def final_binning(params: ParameterSet, ens: Ensemble, n_bins: int) -> RadialBinning:
    a, b = params.targets.a, params.targets.b
    return RadialBinning.with_width(a, b, (b - a) / n_bins, ens.r)


def initial_field_probes(params: ParameterSet, ens: Ensemble) -> dict:
    """Field at t=0 against the piecewise bounds on the three radial regions."""
    a0, eps = params.a0, params.eps
    M_hi = 8 * math.pi * a0 * eps + (8 * math.pi / 3) * eps**3 / a0
    outer_cap = 8 * math.pi * eps / a0 + (8 * math.pi / 3) * eps**3 / a0**3
    shell_cap = 32 * math.pi * eps / a0 + (32 * math.pi / 3) * eps**3 / a0**3
    inner = [0.25 * (a0 - eps), 0.5 * (a0 - eps), a0 - eps]
    outer = [a0 + eps, 1.5 * (a0 + eps), 4.0 * (a0 + eps)]
    e_inner = float(np.max(field_at(ens, np.array(inner))))
    e_outer = float(np.max(field_at(ens, np.array(outer))))
    return {
        "mass_upper_bound": M_hi,
        "inner_field_max": e_inner,
        "inner_zero": e_inner == 0.0,
        "outer_field_max": e_outer,
        "outer_cap": outer_cap,
        "outer_ok": e_outer <= outer_cap,
        "uniform_cap": shell_cap,
    }


def run_experiment(spec: ExperimentSpec) -> Report:
    """Run the full pipeline; errors produce a failed report, never an exception."""
    report = Report(kind=spec.kind, targets=spec.targets)
    clock = time.perf_counter()
    try:
        params = derive_parameters(spec.kind, spec.targets, spec.safety_factor)
        report.params = params.to_dict()
        ens0 = sample_ensemble(params, spec.grid, spec.weight_floor)
        report.timing["setup_s"] = time.perf_counter() - clock
        report.measured_mass = ens0.total_mass
        report.initial = ens0
        a0, eps, tg = params.a0, params.eps, params.targets
        report.initial_validation = validate_initial(ens0, params).to_dict()

        obs0 = measure(ens0, initial_binning(params, ens0, spec.n_bins))
        m_lo = 2 * math.pi * a0 * eps + (math.pi / 6) * eps**3 / a0
        m_hi = 8 * math.pi * a0 * eps + (8 * math.pi / 3) * eps**3 / a0
        probes = initial_field_probes(params, ens0)
        probes["shell_field_max"] = obs0.linf_field
        probes["shell_ok"] = obs0.linf_field <= probes["uniform_cap"] * (1 + spec.slack)

        cfg = IntegratorConfig(dt=params.T * spec.dt_fraction, eta=spec.step_cap, snapshot_stride=spec.snapshot_stride)
        w_max = np.full(len(ens0), -np.inf)
        counter = {"steps": 0}

        def observer(e):
            np.maximum(w_max, e.w, out=w_max)
            counter["steps"] += 1

        E0 = total_energy(ens0)
        t_evolve = time.perf_counter()
        ensT, snaps = evolve(ens0, params.T, cfg, observer=observer)
        report.timing["evolve_s"] = time.perf_counter() - t_evolve
        E1 = total_energy(ensT)
        report.final, report.config = ensT, cfg
        obsT = measure(ensT, final_binning(params, ensT, spec.n_bins))

        report.checks = [
            _ge("initial_radius_min", obs0.r_min, tg.c),
            _le("rho0_linf", obs0.linf_rho, tg.C1),
            _le("E0_linf", obs0.linf_field, tg.C1),
            TheoremCheck(
                "final_radius_in_shell", obsT.r_min if obsT.r_min < tg.a else obsT.r_max,
                tg.a if obsT.r_min < tg.a else tg.b, "in",
                min(obsT.r_min - tg.a, tg.b - obsT.r_max), bool(tg.a <= obsT.r_min and obsT.r_max <= tg.b),
            ),
            _ge("rhoT_linf", obsT.linf_rho, tg.C2),
            _ge("ET_linf", obsT.linf_field, tg.C2),
        ]
        rho_lb, field_lb = bounds.concentration_bounds(ensT.total_mass, tg.a, tg.b)
        contained = bool(tg.a <= obsT.r_min and obsT.r_max <= tg.b)
        report.lemma = {
            "mass_bounds": {"lower": m_lo, "upper": m_hi, "measured": ens0.total_mass,
                            "ok": m_lo * 0.99 <= ens0.total_mass <= m_hi * 1.01},
            "concentration": {
                "contained": contained, "rho_lb": rho_lb, "field_lb": field_lb, "slack": spec.slack,
                "rho_ok": obsT.linf_rho >= (1 - spec.slack) * rho_lb,
                "field_ok": obsT.linf_field >= (1 - spec.slack) * field_lb,
            },
            "initial_field": probes,
            "inward_until_T": {"max_w": float(w_max.max()), "ok": bool(np.all(w_max < 0))},
        }
        report.observables = {"t0": obs0.summary(), "T": obsT.summary()}
        report.integration = {
            "dt": cfg.dt, "eta": spec.step_cap, "steps": counter["steps"], "n_shells": len(ens0),
            "truncated_mass": ens0.truncated_mass, "energy_initial": E0, "energy_final": E1,
            "energy_rel_drift": (E1 - E0) / abs(E0),
            "mass_conserved": bool(np.array_equal(ens0.mu, ensT.mu)),
            "l_conserved": bool(np.array_equal(ens0.l, ensT.l)),
        }
        report.exit_code = EXIT_PASS if report.passed else EXIT_CHECK_FAILED
        if spec.out_dir is not None:
            write_artifacts(spec.out_dir, report, params, ens0, snaps, obs0, obsT)
    except InfeasibleError as exc:
        report.status, report.error, report.exit_code = "failed", str(exc), EXIT_INFEASIBLE
    except (FocusError, FloatingPointError, ArithmeticError) as exc:
        report.status, report.error, report.exit_code = "failed", f"{type(exc).__name__}: {exc}", EXIT_NUMERICAL
    report.timing["total_s"] = time.perf_counter() - clock
    if spec.out_dir is not None:
        _write_text(Path(spec.out_dir) / "report.json", emit(report, "json"))
    return report


# --- serialisation -----------------------------------------------------------

def emit(report: Report, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n"
    if fmt == "text":
        return format_text(report)
    raise DomainError(f"unknown format {fmt!r}")


def format_text(report: Report) -> str:
    tg = report.targets
    lines = [
        f"focusing experiment ({report.kind.value}): C1={tg.C1} C2={tg.C2} a={tg.a} b={tg.b} c={tg.c}",
        f"status: {report.status}" + (f" ({report.error})" if report.error else ""),
    ]
    if report.params:
        p = report.params
        lines.append(f"a0={p['a0']:.6g} eps={p['eps']:.6g} T={p['T']:.6g} M={report.measured_mass:.6g}")
    if report.checks:
        lines.append(f"{'check':<24}{'measured':>16}{'rel':>4}{'threshold':>16}{'margin':>16}  result")
        for c in report.checks:
            lines.append(
                f"{c.name:<24}{c.measured:>16.6g}{c.relation:>4}{c.threshold:>16.6g}{c.margin:>16.6g}  "
                + ("PASS" if c.passed else "FAIL")
            )
    lines.append("overall: " + ("PASS" if report.passed else "FAIL"))
    return "\n".join(lines) + "\n"


def report_from_dict(d: dict) -> Report:
    tg = d["targets"]
    rep = Report(kind=SystemKind.parse(d["kind"]), targets=TargetSpec(tg["C1"], tg["C2"], tg["a"], tg["b"], tg["c"]))
    rep.params = d.get("params")
    rep.measured_mass = d.get("measured_mass")
    rep.checks = [
        TheoremCheck(c["name"], _inf(c["measured"]), _inf(c["threshold"]), c["relation"], _inf(c["margin"]), c["pass"])
        for c in d.get("checks", [])
    ]
    rep.lemma = d.get("lemma") or {}
    rep.initial_validation = d.get("initial_validation")
    rep.observables = d.get("observables") or {}
    rep.integration = d.get("integration") or {}
    rep.status = d.get("status", "ok")
    rep.error = d.get("error")
    rep.timing = d.get("timing") or {}
    rep.exit_code = EXIT_PASS if rep.passed else (EXIT_CHECK_FAILED if rep.status == "ok" else EXIT_NUMERICAL)
    return rep


def _inf(x):
    return math.nan if x is None else x


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_params(path, params: ParameterSet) -> None:
    _write_text(Path(path), json.dumps(_clean(params.to_dict()), indent=2) + "\n")


def write_shells(path, ens: Ensemble) -> None:
    ids = np.arange(len(ens))
    table = np.column_stack((ids, ens.r, ens.w, ens.l, ens.mu))
    _savetxt(path, table, "shell_id,r,w,l,mu", ["%d"] + ["%.17g"] * 4)


def read_shells(path, kind, t=0.0) -> Ensemble:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    return Ensemble(kind=SystemKind.parse(kind), r=data[:, 1].copy(), w=data[:, 2].copy(),
                    l=data[:, 3].copy(), mu=data[:, 4].copy(), t=float(t))


def write_snapshots(path, ens: Ensemble, snaps) -> None:
    n = len(ens)
    ids = np.arange(n)
    blocks = [
        np.column_stack((np.full(n, s.t), ids, s.r, s.w, ens.l, ens.mu, s.m)) for s in snaps
    ]
    table = np.vstack(blocks) if blocks else np.empty((0, 7))
    _savetxt(path, table, "t,shell_id,r,w,l,mu,m_enclosed", ["%.17g", "%d"] + ["%.17g"] * 5)


def _savetxt(path, table, header, fmt):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, table, delimiter=",", header=header, comments="", fmt=fmt)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_artifacts(out_dir, report, params, ens0, snaps, obs0, obsT) -> None:
    out = Path(out_dir)
    write_params(out / "params.json", params)
    write_shells(out / "initial.csv", ens0)
    write_snapshots(out / "snapshots.csv", ens0, snaps)
    write_profiles(obs0, out / "profiles_t0.csv")
    write_profiles(obsT, out / "profiles_T.csv")
