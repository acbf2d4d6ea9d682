"""Self-consistent shell dynamics and single-characteristic integration.

The enclosed charge felt by a shell uses the half-self convention:
everything strictly inside, plus half of every shell at the same radius
(itself included). With that choice the force is the exact gradient of
:func:`total_energy`, so energy drift measures integration error only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ensemble import Ensemble
from .errors import DomainError, NotFoundError, SingularityError
from .phase import R_MIN_DEFAULT, PhasePoint, SystemKind, lorentz_root_arrays, rhs_arrays


# --- enclosed charge -------------------------------------------------------

def enclosed_mass_sorted(r, mu, order=None):
    """Half-self enclosed charge for every shell, plus the sorting permutation.

    ``order`` is a previous permutation used as a warm start: the stable sort
    of nearly ordered data is close to linear time.
    """
    if order is None:
        order = np.argsort(r, kind="stable")
    else:
        order = order[np.argsort(r[order], kind="stable")]
    rs = r[order]
    ms = mu[order]
    n = rs.shape[0]
    csum = np.cumsum(ms)
    m_sorted = np.empty(n)
    if n == 0:
        return m_sorted, order
    new = np.empty(n, dtype=bool)
    new[0] = True
    np.not_equal(rs[1:], rs[:-1], out=new[1:])
    if new.all():
        np.subtract(csum, 0.5 * ms, out=m_sorted)
    else:
        starts = np.flatnonzero(new)
        group_sum = np.add.reduceat(ms, starts)
        before = csum[starts] - ms[starts]
        counts = np.diff(np.append(starts, n))
        m_sorted = np.repeat(before + 0.5 * group_sum, counts)
    m = np.empty(n)
    m[order] = m_sorted
    return m, order


def enclosed_mass(ens: Ensemble) -> np.ndarray:
    return enclosed_mass_sorted(ens.r, ens.mu)[0]


def total_energy(ens: Ensemble) -> float:
    """Kinetic plus pairwise shell energy whose gradient is the half-self force.

    Pair term: sum_{i<j} mu_i mu_j / max(R_i, R_j); self term: mu_i^2 / (2 R_i).
    """
    if ens.kind is SystemKind.VP:
        kinetic = 0.5 * np.sum(ens.mu * (ens.w**2 + ens.l / ens.r**2))
    else:
        kinetic = np.sum(ens.mu * lorentz_root_arrays(ens.r, ens.w, ens.l))
    order = np.argsort(ens.r, kind="stable")
    rs, ms = ens.r[order], ens.mu[order]
    inner = np.cumsum(ms) - ms
    # ties at equal radius contribute mu_i mu_j / R regardless of order
    potential = np.sum(ms * inner / rs) + np.sum(ms * ms / (2.0 * rs))
    return float(kinetic + potential)


# --- mass profiles ---------------------------------------------------------

class MassProfile:
    """Enclosed charge m(t, r) seen by the integrators."""

    total: float = math.inf

    def field_source(self, mu):
        """Return a callable (t, r) -> m bound to the given shell weights."""
        raise NotImplementedError


class SelfConsistent(MassProfile):
    def field_source(self, mu):
        state = {"order": None}

        def source(t, r):
            m, state["order"] = enclosed_mass_sorted(r, mu, state["order"])
            return m

        return source

    def __repr__(self):
        return "SelfConsistent()"


@dataclass(frozen=True)
class Constant(MassProfile):
    M: float

    def __post_init__(self):
        if not (math.isfinite(self.M) and self.M >= 0):
            raise DomainError(f"Constant profile needs finite M >= 0, got {self.M!r}")

    @property
    def total(self):
        return self.M

    def field_source(self, mu):
        M = self.M
        return lambda t, r: np.full(np.shape(r), M)


class Zero(Constant):
    def __init__(self):
        super().__init__(0.0)

    def __repr__(self):
        return "Zero()"


@dataclass(frozen=True)
class Custom(MassProfile):
    func: Callable
    M: float

    @property
    def total(self):
        return self.M

    def field_source(self, mu):
        func, M = self.func, self.M

        def source(t, r):
            m = np.broadcast_to(np.asarray(func(t, r), dtype=float), np.shape(r))
            if np.any(~np.isfinite(m)) or np.any(m < 0) or np.any(m > M):
                raise DomainError(f"custom mass profile left [0, {M}]")
            return m

        return source


SELF_CONSISTENT = SelfConsistent()


# --- integration -----------------------------------------------------------

@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed RK4 step ``dt`` (> 0); :func:`evolve` takes the direction from t_end.

    ``eta`` (optional) caps steps near close approach: no characteristic
    moves more than ``eta * R`` in one step. Off by default.
    """

    dt: float
    max_steps: int = 10_000_000
    r_min: float = R_MIN_DEFAULT
    snapshot_stride: int = 0
    eta: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"dt must be > 0, got {self.dt!r}")
        if not self.r_min > 0:
            raise DomainError(f"r_min must be > 0, got {self.r_min!r}")
        if self.eta is not None and not self.eta > 0:
            raise DomainError(f"eta must be > 0, got {self.eta!r}")


def _guard(r, r_min, t):
    if np.any(r <= r_min):
        i = int(np.flatnonzero(r <= r_min)[0])
        raise SingularityError(f"shell {i} reached r={r[i]!r} <= r_min={r_min!r} near t={t!r}", shell=i, t=t)


def rk4_arrays(kind, r, w, l, t, dt, source, r_min):
    """One classical RK4 step; the field is re-evaluated at every stage."""
    half = 0.5 * dt
    _guard(r, r_min, t)
    dr1, dw1 = rhs_arrays(kind, r, w, l, source(t, r))
    r2 = r + half * dr1
    w2 = w + half * dw1
    _guard(r2, r_min, t)
    dr2, dw2 = rhs_arrays(kind, r2, w2, l, source(t + half, r2))
    r3 = r + half * dr2
    w3 = w + half * dw2
    _guard(r3, r_min, t)
    dr3, dw3 = rhs_arrays(kind, r3, w3, l, source(t + half, r3))
    r4 = r + dt * dr3
    w4 = w + dt * dw3
    _guard(r4, r_min, t)
    dr4, dw4 = rhs_arrays(kind, r4, w4, l, source(t + dt, r4))
    sixth = dt / 6.0
    return r + sixth * (dr1 + 2.0 * (dr2 + dr3) + dr4), w + sixth * (dw1 + 2.0 * (dw2 + dw3) + dw4)


def step(ens: Ensemble, cfg: IntegratorConfig, profile: MassProfile = SELF_CONSISTENT, dt=None, _source=None) -> Ensemble:
    dt = cfg.dt if dt is None else dt
    source = _source if _source is not None else profile.field_source(ens.mu)
    r, w = rk4_arrays(ens.kind, ens.r, ens.w, ens.l, ens.t, dt, source, cfg.r_min)
    return ens.advanced(r, w, ens.t + dt)


@dataclass(frozen=True)
class Snapshot:
    t: float
    r: np.ndarray
    w: np.ndarray
    m: np.ndarray


def _step_plan(span, dt):
    n_full = int(math.floor(span / dt * (1.0 + 1e-12)))
    rem = span - n_full * dt
    if rem <= 1e-12 * span:
        rem = 0.0
    return n_full, rem


def evolve(ens: Ensemble, t_end: float, cfg: IntegratorConfig, profile: MassProfile = SELF_CONSISTENT,
           observer: Callable[[Ensemble], None] | None = None):
    """Step from ens.t to exactly t_end (backwards if t_end < ens.t).

    Returns (final ensemble, snapshots). A snapshot is taken at the start,
    every ``cfg.snapshot_stride`` steps (0 disables), and at the end.
    ``observer`` is called with the ensemble after every step.
    """
    span = t_end - ens.t
    source = profile.field_source(ens.mu)
    stride = cfg.snapshot_stride

    def snap(e):
        return Snapshot(e.t, e.r, e.w, source(e.t, e.r))

    snapshots = [snap(ens)] if stride else []
    if span == 0:
        return ens, snapshots
    sign = 1.0 if span > 0 else -1.0
    n_full, rem = _step_plan(abs(span), cfg.dt)
    if n_full + (rem > 0) > cfg.max_steps:
        raise DomainError(f"{n_full + (rem > 0)} steps exceed max_steps={cfg.max_steps}")
    t0 = ens.t
    cur = ens
    if cfg.eta is not None:
        cur, snapshots = _evolve_capped(cur, t_end, sign, cfg, source, observer, snapshots, snap)
    else:
        dt = sign * cfg.dt
        for i in range(n_full):
            r, w = rk4_arrays(cur.kind, cur.r, cur.w, cur.l, cur.t, dt, source, cfg.r_min)
            cur = cur.advanced(r, w, t0 + (i + 1) * dt)
            if observer is not None:
                observer(cur)
            if stride and (i + 1) % stride == 0:
                snapshots.append(snap(cur))
        if rem > 0:
            r, w = rk4_arrays(cur.kind, cur.r, cur.w, cur.l, cur.t, t_end - cur.t, source, cfg.r_min)
            cur = cur.advanced(r, w, t_end)
            if observer is not None:
                observer(cur)
    cur = cur.advanced(cur.r, cur.w, t_end)
    if stride and snapshots[-1].t != t_end:
        snapshots.append(snap(cur))
    return cur, snapshots


def close_approach_step(kind, r, w, l, eta):
    """Largest step moving no characteristic more than eta times its radius."""
    return float(eta * np.min(r / np.maximum(_speed(kind, r, w, l), 1e-300)))


def _evolve_capped(cur, t_end, sign, cfg, source, observer, snapshots, snap):
    stride = cfg.snapshot_stride
    i = 0
    while cur.t != t_end:
        i += 1
        if i > cfg.max_steps:
            raise DomainError(f"capped evolve exceeded max_steps={cfg.max_steps}")
        h = min(cfg.dt, close_approach_step(cur.kind, cur.r, cur.w, cur.l, cfg.eta))
        remaining = abs(t_end - cur.t)
        if h >= remaining * (1.0 - 1e-12):
            h, t_new = remaining, t_end
        else:
            t_new = cur.t + sign * h
        r, w = rk4_arrays(cur.kind, cur.r, cur.w, cur.l, cur.t, t_new - cur.t, source, cfg.r_min)
        cur = cur.advanced(r, w, t_new)
        if observer is not None:
            observer(cur)
        if stride and i % stride == 0:
            snapshots.append(snap(cur))
    return cur, snapshots


# --- single characteristics --------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    kind: SystemKind
    t: np.ndarray
    r: np.ndarray
    w: np.ndarray
    l: float

    def __len__(self):
        return self.t.shape[0]

    def point(self, i) -> PhasePoint:
        return PhasePoint(float(self.r[i]), float(self.w[i]), self.l)


def _speed(kind, r, w, l):
    v = np.sqrt(w * w + l / (r * r))
    if kind is SystemKind.RVP:
        v = v / lorentz_root_arrays(r, w, l)
    return v


def integrate_batch(kind, r0, w0, l, profile: MassProfile, t_end, cfg: IntegratorConfig, dt=None):
    """Integrate independent characteristics side by side.

    ``t_end`` and ``dt`` may be scalars or per-characteristic arrays. The
    profile must not depend on the other characteristics (Constant, Zero or
    Custom), or be a sequence of Constant profiles, one per characteristic.
    Each characteristic lands exactly on its own t_end.
    """
    kind = SystemKind.parse(kind)
    r0, w0, l = (np.array(x, dtype=float, ndmin=1) for x in (r0, w0, l))
    n = r0.shape[0]
    if isinstance(profile, MassProfile):
        if isinstance(profile, SelfConsistent):
            raise DomainError("integrate_batch needs an external mass profile; use evolve for self-consistent runs")
        shared = profile.field_source(None)
        per_char = None
    else:
        profiles = list(profile)
        if len(profiles) != n or not all(isinstance(p, Constant) for p in profiles):
            raise DomainError("per-characteristic profiles must be one Constant per characteristic")
        per_char = np.array([p.M for p in profiles])
    t_end = np.broadcast_to(np.asarray(t_end, dtype=float), (n,)).copy()
    dt_max = np.broadcast_to(np.asarray(cfg.dt if dt is None else dt, dtype=float), (n,)).copy()
    if np.any(t_end <= 0):
        raise DomainError("t_end must be > 0")
    t = np.zeros(n)
    r, w = r0.copy(), w0.copy()
    rec_i, rec_t, rec_r, rec_w = [np.arange(n)], [t.copy()], [r.copy()], [w.copy()]
    active = np.arange(n)
    steps = 0
    while active.size:
        steps += 1
        if steps > cfg.max_steps:
            raise DomainError(f"trajectory integration exceeded max_steps={cfg.max_steps}")
        ra, wa, la, ta = r[active], w[active], l[active], t[active]
        h = dt_max[active]
        if cfg.eta is not None:
            h = np.minimum(h, cfg.eta * ra / np.maximum(_speed(kind, ra, wa, la), 1e-300))
        remaining = t_end[active] - ta
        last = h >= remaining * (1.0 - 1e-12)
        h = np.where(last, remaining, h)
        if per_char is None:
            source = shared
        else:
            m_active = per_char[active]
            source = lambda t_, r_: m_active  # noqa: E731
        rn, wn = rk4_arrays(kind, ra, wa, la, ta, h, source, cfg.r_min)
        tn = np.where(last, t_end[active], ta + h)
        r[active], w[active], t[active] = rn, wn, tn
        rec_i.append(active)
        rec_t.append(tn)
        rec_r.append(rn)
        rec_w.append(wn)
        active = active[~last]
    idx = np.concatenate(rec_i)
    order = np.argsort(idx, kind="stable")
    bounds = np.searchsorted(idx[order], np.arange(n + 1))
    T, R, W = (np.concatenate(a)[order] for a in (rec_t, rec_r, rec_w))
    return [
        Trajectory(kind, T[bounds[i]:bounds[i + 1]], R[bounds[i]:bounds[i + 1]], W[bounds[i]:bounds[i + 1]], float(l[i]))
        for i in range(n)
    ]


def single_trajectory(kind, p: PhasePoint, profile: MassProfile, t_end: float, cfg: IntegratorConfig) -> Trajectory:
    """Characteristic through p under an external mass profile.

    A SelfConsistent profile here means the lone shell's own field (half its
    weight, which is zero for a weightless test particle).
    """
    if isinstance(profile, SelfConsistent):
        profile = Zero()
    return integrate_batch(kind, [p.r], [p.w], [p.l], profile, t_end, cfg)[0]


def turning_time(traj: Trajectory) -> float:
    """First time W crosses from negative to non-negative (linear interpolation)."""
    w = traj.w
    if not w[0] < 0:
        raise NotFoundError("trajectory must start with w < 0")
    up = np.flatnonzero((w[:-1] < 0) & (w[1:] >= 0))
    if up.size == 0:
        raise NotFoundError(f"no sign change of W before t={traj.t[-1]!r}; extend t_end")
    i = int(up[0])
    t0, t1, w0, w1 = traj.t[i], traj.t[i + 1], w[i], w[i + 1]
    return float(t0 + (t1 - t0) * (-w0) / (w1 - w0))


def turning_bracket(traj: Trajectory) -> float:
    """Width of the sample interval bracketing the turning point."""
    w = traj.w
    up = np.flatnonzero((w[:-1] < 0) & (w[1:] >= 0))
    if up.size == 0:
        raise NotFoundError("no sign change of W")
    i = int(up[0])
    return float(traj.t[i + 1] - traj.t[i])


def sign_changes(traj: Trajectory) -> int:
    s = np.sign(traj.w)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))
