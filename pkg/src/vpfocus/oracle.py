"""Simulated characteristics checked against the closed-form lemma bounds.

Each datum (r, w, l, M) is integrated under a Constant(M) field past its
turning time; the bounds of :mod:`vpfocus.bounds` are then compared with
every sample taken before the turning time.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import bounds
from .bounds import InitialDatum
from .dynamics import Constant, IntegratorConfig, integrate_batch, sign_changes
from .phase import SystemKind

KINETIC_TOL = 1e-9
ENVELOPE_REL_TOL = 1e-6


@dataclass
class LemmaCheck:
    kind: str
    r: float
    w: float
    l: float
    M: float
    t0_sim: float
    t0_bracket: float
    t0_lower: float
    t0_upper: float | None
    upper_env_margin: float
    lower_env_margin: float
    kinetic_margin: float | None
    sign_changes: int
    n_samples: int
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def free_turning_time(kind, d: InitialDatum) -> float:
    """Closest-approach time of the field-free characteristic."""
    p2 = d.w**2 + d.l / d.r**2
    t = d.r * abs(d.w) / p2
    if SystemKind.parse(kind) is SystemKind.RVP:
        t *= math.sqrt(1.0 + p2)
    return t


def random_data(rng: np.random.Generator, n: int, m_max: float = 10.0, zero_fraction: float = 0.25):
    """Log-uniform r in [0.1, 10], |w| in [0.1, 10], l in [1e-3, 10]; M = 0 or U(0, m_max]."""
    r = 10.0 ** rng.uniform(-1.0, 1.0, n)
    w = -(10.0 ** rng.uniform(-1.0, 1.0, n))
    l = 10.0 ** rng.uniform(-3.0, 1.0, n)
    M = np.where(rng.uniform(size=n) < zero_fraction, 0.0, rng.uniform(0.0, m_max, n))
    return [InitialDatum(float(a), float(b), float(c), float(m)) for a, b, c, m in zip(r, w, l, M)]


def _traverse(kind, data, horizon, steps, eta):
    t_end = np.asarray(horizon, dtype=float)
    cfg = IntegratorConfig(dt=1.0, eta=eta)
    return integrate_batch(
        kind, [d.r for d in data], [d.w for d in data], [d.l for d in data],
        [Constant(d.M) for d in data], t_end, cfg, dt=t_end / steps,
    )


def _crossing(traj):
    w = traj.w
    up = np.flatnonzero((w[:-1] < 0) & (w[1:] >= 0))
    if up.size == 0:
        return None
    i = int(up[0])
    t0 = traj.t[i] + (traj.t[i + 1] - traj.t[i]) * (-w[i]) / (w[i + 1] - w[i])
    return float(t0), float(traj.t[i + 1] - traj.t[i])


def simulate(kind, data, steps: int = 2000, eta: float = 1e-3, max_extensions: int = 8):
    """Trajectories (one per datum) that run at least 10% past the turning time."""
    kind = SystemKind.parse(kind)
    horizon = [1.2 * free_turning_time(kind, d) for d in data]
    trajs = _traverse(kind, data, horizon, steps, eta)
    for _ in range(max_extensions):
        redo = []
        for i, tr in enumerate(trajs):
            c = _crossing(tr)
            if c is None or c[0] > tr.t[-1] / 1.1:
                redo.append(i)
        if not redo:
            break
        sub = [data[i] for i in redo]
        new = _traverse(kind, sub, [2.0 * trajs[i].t[-1] for i in redo], steps, eta)
        for i, tr in zip(redo, new):
            trajs[i] = tr
    return trajs


def check(kind, d: InitialDatum, traj) -> LemmaCheck:
    kind = SystemKind.parse(kind)
    crossing = _crossing(traj)
    t0, bracket = crossing if crossing is not None else (math.nan, math.nan)
    pre = traj.t < t0 if crossing is not None else np.ones(len(traj), dtype=bool)
    t, R, W = traj.t[pre], traj.r[pre], traj.w[pre]
    tol = ENVELOPE_REL_TOL * d.r
    if kind is SystemKind.VP:
        upper_sq, lower = bounds.vp_envelope(t, d)
        t0_lo, t0_hi = bounds.vp_t0_lower(d), None
        kin = None
    else:
        upper_sq, lower, cap = bounds.rvp_envelope(t, d)
        t0_lo, t0_hi = bounds.rvp_t0_bounds(d)
        kin = float(np.min(cap + KINETIC_TOL - (W**2 + d.l / R**2)))
    up_m = float(np.min(upper_sq + tol - R**2))
    lo_m = float(np.min(R - lower + tol))
    n_sign = sign_changes(traj)
    ok = crossing is not None and n_sign == 1 and up_m >= 0 and lo_m >= 0
    ok = ok and t0 >= t0_lo - bracket
    if t0_hi is not None:
        ok = ok and t0 <= t0_hi + bracket
    if kin is not None:
        ok = ok and kin >= 0
    return LemmaCheck(
        kind=kind.value, r=d.r, w=d.w, l=d.l, M=d.M, t0_sim=t0, t0_bracket=bracket, t0_lower=t0_lo,
        t0_upper=t0_hi, upper_env_margin=up_m, lower_env_margin=lo_m, kinetic_margin=kin,
        sign_changes=n_sign, n_samples=len(traj), passed=bool(ok),
    )


def run_suite(kind, data, chunk: int = 250, **kw):
    """LemmaCheck for every datum; trajectories are integrated in chunks."""
    results = []
    for s in range(0, len(data), chunk):
        sub = data[s:s + chunk]
        for d, tr in zip(sub, simulate(kind, sub, **kw)):
            results.append(check(kind, d, tr))
    return results
