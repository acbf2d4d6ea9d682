"""Parameter derivation, the explicit initial distributions, and grid sampling.

Both constructions place a thin shell of charge far from the origin
(radius a0 +- eps), with density exactly 1/(2 a0) on the inner half of the
shell, and give every particle an inward velocity tuned so that it lands in
[a, b] at the focusing time T.
"""
from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .ensemble import Ensemble
from .errors import DomainError, InfeasibleError, SamplingError
from .phase import PhasePoint, SystemKind

TWO_PI = 2.0 * math.pi
FOUR_PI_SQ = 4.0 * math.pi**2


@dataclass(frozen=True)
class TargetSpec:
    C1: float
    C2: float
    a: float
    b: float
    c: float

    def __post_init__(self):
        vals = (self.C1, self.C2, self.a, self.b, self.c)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"target values must be finite: {vals}")
        if not (self.C1 > 0 and self.C2 > 0):
            raise DomainError(f"need C1, C2 > 0, got C1={self.C1}, C2={self.C2}")
        if not (self.c > self.b > self.a > 0):
            raise DomainError(f"need c > b > a > 0, got a={self.a}, b={self.b}, c={self.c}")


@dataclass(frozen=True)
class ParameterSet:
    kind: SystemKind
    targets: TargetSpec
    k: float
    eps: float
    a0: float
    T: float
    d: float
    delta: float
    l_max: float
    bump_scale: float  # c_H: H(s) = c_H exp(-1/(1-s)) on [0, 1)
    N: float | None = None
    h: float | None = None
    safety_factor: float = 1.0
    a0_terms: dict = field(default_factory=dict)
    T_terms: dict = field(default_factory=dict)
    constraints: dict = field(default_factory=dict)

    @property
    def sqrt_k_b(self) -> float:
        return math.sqrt(self.k) * self.targets.b

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        out.update(asdict(self.targets))
        for name in ("k", "eps", "a0", "T", "d", "delta", "N", "h", "l_max", "bump_scale", "safety_factor"):
            out[name] = getattr(self, name)
        out["a0_terms"] = dict(self.a0_terms)
        out["T_terms"] = dict(self.T_terms)
        out["constraints"] = dict(self.constraints)
        return out


# --- smooth profiles -------------------------------------------------------

def _bump_core(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = (s >= 0) & (s < 1)
    out[inside] = np.exp(-1.0 / (1.0 - s[inside]))
    return out


@functools.lru_cache(maxsize=None)
def bump_mass() -> float:
    """Integral over R^3 of exp(-1/(1-|u|^2)) on the unit ball."""
    val, _ = integrate.quad(
        lambda q: q * q * math.exp(-1.0 / (1.0 - q * q)), 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200
    )
    return 4.0 * math.pi * val


def bump_profile(s, scale):
    """H(s) = scale * exp(-1/(1-s)) for 0 <= s < 1, else 0."""
    return scale * _bump_core(s)


def scaled_bump(s, scale, delta):
    """H_delta(s) = delta^-3 H(s / delta^2); support [0, delta^2)."""
    return bump_profile(np.asarray(s, dtype=float) / (delta * delta), scale) / delta**3


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        g0 = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        g1 = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return g0 / (g0 + g1)


def cutoff(r, a0, eps):
    """chi: 1 on [a0 - eps/2, a0 + eps/2], 0 outside (a0 - eps, a0 + eps)."""
    r = np.asarray(r, dtype=float)
    half = 0.5 * eps
    return smooth_step((r - (a0 - eps)) / half) * smooth_step(((a0 + eps) - r) / half)


# --- parameter derivation --------------------------------------------------

def _vp_a0_terms(t: TargetSpec, s: float, eps: float) -> dict:
    r2 = math.sqrt(2.0)
    return {
        "eps_plus_c": eps + t.c,
        "inv_C1": 1.0 / t.C1,
        "field_linear_C1": 3.0 * r2 * math.pi * s / t.C1,
        "field_cubic_C1": 2.0 ** (-11.0 / 6.0) * math.pi ** (1.0 / 3.0) * s * t.C1 ** (-1.0 / 3.0),
        "density_C2": 16.0 * r2 * (t.b**3 - t.a**3) * t.C2 / (3.0 * s),
        "field_C2": 4.0 * r2 * t.b**2 * t.C2 / (math.pi * s),
    }


def _rvp_a0_terms(t: TargetSpec, s: float, eps: float, k: float) -> dict:
    r2 = math.sqrt(2.0)
    return {
        "eps_plus_c": eps + t.c,
        "inv_C1": 1.0 / t.C1,
        "field_linear_C1": 6.0 * r2 * math.pi * s / t.C1,
        "field_cubic_C1": 2.0 ** (5.0 / 6.0) * math.pi ** (1.0 / 3.0) * s * t.C1 ** (-1.0 / 3.0),
        "eps_cubed": eps**3,
        "turning_D": (math.sqrt(86.0 * math.pi) / t.a) ** 3,
        "two_eps": 2.0 * eps,
        "envelope": (344.0 * math.pi / ((1.0 - k) * t.b**2)) ** 1.5,
        "density_C2": 8.0 * r2 * (t.b**3 - t.a**3) * t.C2 / (3.0 * s),
        "field_C2": 2.0 * r2 * t.b**2 * t.C2 / (math.pi * s),
    }


def _vp_time_bounds(t: TargetSpec, k, eps, a0, l):
    """Both caps on T (inward motion and envelope) for a given squared angular momentum l.

    The first cap is evaluated with the mass factor read both as
    (pi/6) eps / a0 and (pi/6) eps^3 / a0; the smaller cap is kept.
    """
    top = t.a * abs(math.sqrt(k) * t.b - a0 - eps)
    m_lo_eps1 = TWO_PI * a0 * eps + (math.pi / 6.0) * eps / a0
    m_lo_eps3 = TWO_PI * a0 * eps + (math.pi / 6.0) * eps**3 / a0
    m_hi = 8.0 * math.pi * a0 * eps + (8.0 * math.pi / 3.0) * eps**3 / a0
    turn_1 = top / math.sqrt(l + m_lo_eps1 * (a0 - eps))
    turn_3 = top / math.sqrt(l + m_lo_eps3 * (a0 - eps))
    shell = t.b * math.sqrt((1.0 - k) / (l / (a0 - eps) ** 2 + m_hi / (a0 - eps)))
    return {"turning_eps": turn_1, "turning_eps3": turn_3, "envelope": shell}


def _derive_vp(spec: TargetSpec, safety: float, max_iter: int = 100) -> ParameterSet:
    k = (spec.a**2 + spec.b**2) / (2.0 * spec.b**2)
    s = math.sqrt(spec.a**2 + spec.b**2) - math.sqrt(2.0) * spec.a
    eps = (math.sqrt(k) * spec.b - spec.a) / 8.0
    terms = _vp_a0_terms(spec, s, eps)
    a0 = safety * max(terms.values())
    d = 0.5 * (spec.a + math.sqrt(k) * spec.b)
    delta = 0.25 * (math.sqrt(k) * spec.b - spec.a)

    def l_sup(T):
        return (a0 + eps) ** 2 * delta**2 / T**2

    # l enters the cap on T, and the support's l-range grows as T shrinks:
    # iterate T -> cap(l_sup(T)) from l = 0 (monotone decreasing sequence).
    T = min(_vp_time_bounds(spec, k, eps, a0, 0.0).values())
    for _ in range(max_iter):
        T_next = min(_vp_time_bounds(spec, k, eps, a0, l_sup(T)).values())
        if abs(T_next - T) <= 1e-15 * T:
            T = T_next
            break
        T = T_next
    else:
        raise InfeasibleError("T fixed point", f"no convergence in {max_iter} iterations")
    # step just inside the fixed point so the cap holds strictly at the final l_max
    T *= 1.0 - 1e-9
    caps = _vp_time_bounds(spec, k, eps, a0, l_sup(T))
    if not T <= min(caps.values()):
        raise InfeasibleError("T <= inward-motion and envelope caps", f"T={T}, caps={caps}")
    w_lo = (spec.a - a0 + eps) / T
    w_hi = (math.sqrt(k) * spec.b - a0 - eps) / T
    constraints = {
        "eps_below_half_gap": (math.sqrt(k) * spec.b - spec.a) / 2.0 - eps,
        "w_window_nonempty": w_hi - w_lo,
        "a0_minus_eps_above_c": a0 - (eps + spec.c),
        "d_below_inner_radius": a0 - eps - d,
        "T_below_caps": min(caps.values()) - T,
    }
    for name, margin in constraints.items():
        # a0 may sit exactly on the eps + c term; shells still have r > a0 - eps
        ok = margin >= 0 if name == "a0_minus_eps_above_c" else margin > 0
        if not ok:
            raise InfeasibleError(name, f"margin={margin}")
    T_terms = dict(caps)
    T_terms["l_max"] = l_sup(T)
    return ParameterSet(
        kind=SystemKind.VP, targets=spec, k=k, eps=eps, a0=a0, T=T, d=d, delta=delta,
        l_max=l_sup(T), bump_scale=(T**3 / (2.0 * a0)) / bump_mass(), safety_factor=safety,
        a0_terms=terms, T_terms=T_terms, constraints=constraints,
    )


def rvp_time_interval(a0, eps, h, sqrt_k_b, a):
    """Closed interval for the RVP focusing time (squared-momentum form on both ends)."""
    hi_p = a0**3 + h * a0
    lo_p = a0**3 - h * a0
    lower = (a0 + eps - sqrt_k_b) * math.sqrt(2.0 + hi_p**2) / lo_p
    upper = (a0 - eps - a) * math.sqrt(1.0 + lo_p**2) / hi_p
    return lower, upper


def _derive_rvp(spec: TargetSpec, safety: float) -> ParameterSet:
    k = (spec.a**2 + spec.b**2) / (2.0 * spec.b**2)
    skb = math.sqrt(k) * spec.b
    s = math.sqrt(spec.a**2 + spec.b**2) - math.sqrt(2.0) * spec.a
    eps = (skb - spec.a) / 4.0
    terms = _rvp_a0_terms(spec, s, eps, k)
    a0 = safety * max(terms.values())
    den = a0 + eps - skb
    if not den > 0:
        raise InfeasibleError("a0 + eps - sqrt(k) b > 0", f"value={den}")
    N = (a0 - eps - spec.a) / den
    if not N > 1:
        raise InfeasibleError("N > 1", f"N={N}")
    sqN = math.sqrt(N)
    h_caps = {"quadratic": (N - 1.0) * a0**2 / (2.0 * (N + 1.0)), "root": (sqN - 1.0) * a0**2 / (1.0 + sqN)}
    h = 0.5 * min(h_caps.values())
    delta = h * a0 - eps
    if not delta > 0:
        raise InfeasibleError("h a0 > eps", f"h*a0={h * a0}, eps={eps}")
    if not h * a0 < a0**3:
        raise InfeasibleError("h a0 < a0^3", f"h*a0={h * a0}")
    T_lo, T_hi = rvp_time_interval(a0, eps, h, skb, spec.a)
    hi_p, lo_p = a0**3 + h * a0, a0**3 - h * a0
    constraints = {
        "N_above_one": N - 1.0,
        "delta_positive": delta,
        "a0_minus_eps_above_c": a0 - (eps + spec.c),
        "momentum_ratio_below_sqrtN": sqN - hi_p / lo_p,
        "energy_ratio_below_N": N - (2.0 + hi_p**2) / (1.0 + lo_p**2),
        "T_interval_nonempty": T_hi - T_lo,
        "turning_condition_4ha0^4": 4.0 * h * a0**4 - 1.0,
    }
    for name, margin in constraints.items():
        if not margin >= 0:
            raise InfeasibleError(name, f"margin={margin}")
    T = 0.5 * (T_lo + T_hi)
    d = a0**3 - a0
    return ParameterSet(
        kind=SystemKind.RVP, targets=spec, k=k, eps=eps, a0=a0, T=T, d=d, delta=delta,
        l_max=(a0 + eps) ** 2 * delta**2, bump_scale=(1.0 / (2.0 * a0)) / bump_mass(),
        N=N, h=h, safety_factor=safety, a0_terms=terms,
        T_terms={"lower": T_lo, "upper": T_hi, "h_cap_quadratic": h_caps["quadratic"], "h_cap_root": h_caps["root"]},
        constraints=constraints,
    )


def derive_parameters(kind, spec: TargetSpec, safety_factor: float = 1.0) -> ParameterSet:
    """All constants of the focusing construction for the given targets.

    Raises InfeasibleError naming the violated constraint; nothing is clamped.
    """
    if not (math.isfinite(safety_factor) and safety_factor >= 1.0):
        raise DomainError(f"safety_factor must be >= 1, got {safety_factor!r}")
    kind = SystemKind.parse(kind)
    if kind is SystemKind.VP:
        return _derive_vp(spec, safety_factor)
    return _derive_rvp(spec, safety_factor)


# --- initial distribution --------------------------------------------------

def _bump_argument(params: ParameterSet, r, w, l):
    if params.kind is SystemKind.VP:
        return (r - params.d + params.T * w) ** 2 + params.T**2 * l / (r * r)
    return (r + params.d + w) ** 2 + l / (r * r)


def f0_arrays(params: ParameterSet, r, w, l):
    r = np.asarray(r, dtype=float)
    w = np.asarray(w, dtype=float)
    l = np.asarray(l, dtype=float)
    arg = _bump_argument(params, r, w, l)
    return scaled_bump(arg, params.bump_scale, params.delta) * cutoff(r, params.a0, params.eps)


def f0_eval(params: ParameterSet, p: PhasePoint) -> float:
    return float(f0_arrays(params, p.r, p.w, p.l))


def support_box(params: ParameterSet):
    """Axis-aligned (r, w, l) box containing the support of f0."""
    a0, eps, d, delta = params.a0, params.eps, params.d, params.delta
    r_rng = (a0 - eps, a0 + eps)
    if params.kind is SystemKind.VP:
        T = params.T
        w_rng = ((d - delta - (a0 + eps)) / T, (d + delta - (a0 - eps)) / T)
    else:
        w_rng = (-(a0 + eps) - d - delta, -(a0 - eps) - d + delta)
    return r_rng, w_rng, (0.0, params.l_max)


def sample_ensemble(params: ParameterSet, grid=(64, 64, 16), weight_floor: float = 1e-15) -> Ensemble:
    """Midpoint-rule discretisation of f0 into weighted shells.

    Each cell with f0 > 0 becomes one shell of weight 4 pi^2 f0 dr dw dl.
    Shells lighter than ``weight_floor`` times the total are dropped; their
    mass is stored on the ensemble as ``truncated_mass``.
    """
    n_r, n_w, n_l = (int(g) for g in grid)
    if min(n_r, n_w, n_l) < 2:
        raise DomainError(f"grid dimensions must each be >= 2, got {grid}")
    axes = []
    widths = []
    for (lo, hi), n in zip(support_box(params), (n_r, n_w, n_l)):
        h = (hi - lo) / n
        axes.append(lo + h * (np.arange(n) + 0.5))
        widths.append(h)
    R, W, L = np.meshgrid(*axes, indexing="ij")
    R, W, L = R.ravel(), W.ravel(), L.ravel()
    f = f0_arrays(params, R, W, L)
    mu = FOUR_PI_SQ * f * (widths[0] * widths[1] * widths[2])
    live = mu > 0
    if not np.any(live):
        raise SamplingError(f"no grid cell intersects the support of f0 at grid {grid}")
    total = float(np.sum(mu[live]))
    keep = live & (mu >= weight_floor * total)
    truncated = float(np.sum(mu[live & ~keep]))
    return Ensemble(
        kind=params.kind, r=R[keep].copy(), w=W[keep].copy(), l=L[keep].copy(), mu=mu[keep].copy(),
        t=0.0, truncated_mass=truncated, meta={"grid": (n_r, n_w, n_l), "cell_widths": tuple(widths)},
    )


def rho0_radial(params: ParameterSet, r: float, epsrel: float = 1e-10) -> float:
    """Initial density at radius r from a direct (w, l) quadrature of f0.

    Uses the shift u = r - d + T w (VP) / u = r + d + w (RVP) and the scaled
    q = T^2 l / r^2 (VP) / q = l / r^2 (RVP), so the integration region is
    the half-disc u^2 + q <= delta^2.
    """
    if not r > 0:
        raise DomainError(f"radius must be > 0, got {r!r}")
    if r <= params.a0 - params.eps or r >= params.a0 + params.eps:
        return 0.0
    delta = params.delta
    if params.kind is SystemKind.VP:
        T = params.T

        def to_wl(u, q):
            return (u - r + params.d) / T, q * r * r / T**2

        jac = r * r / T**3
    else:

        def to_wl(u, q):
            return u - r - params.d, q * r * r

        jac = r * r

    def integrand(q, u):
        w, l = to_wl(u, q)
        return float(f0_arrays(params, r, w, l))

    val, _ = integrate.dblquad(
        integrand, -delta, delta, 0.0, lambda u: max(delta * delta - u * u, 0.0), epsabs=0.0, epsrel=epsrel
    )
    return math.pi / (r * r) * jac * val


# --- initial-state validation ---------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_margin: float
    n_violations: int
    gating: bool = True
    violators: tuple = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name, "passed": self.passed, "worst_margin": self.worst_margin,
            "n_violations": self.n_violations, "gating": self.gating, "violators": list(self.violators),
        }


@dataclass
class ValidationFragment:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.gating)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _window_check(name, margins, strict, gating=True, max_listed=20):
    bad = margins <= 0 if strict else margins < 0
    idx = np.flatnonzero(bad)
    return CheckResult(
        name=name, passed=idx.size == 0, worst_margin=float(np.min(margins)) if margins.size else math.inf,
        n_violations=int(idx.size), gating=gating, violators=tuple(int(i) for i in idx[:max_listed]),
    )


def validate_initial(ens: Ensemble, params: ParameterSet) -> ValidationFragment:
    """Shell-by-shell check of the initial radius, velocity and l windows.

    Returns a fragment; violations are reported, never raised.
    """
    a0, eps, tg = params.a0, params.eps, params.targets
    r, w, l = ens.r, ens.w, ens.l
    checks = [_window_check("radius_window", np.minimum(r - (a0 - eps), (a0 + eps) - r), strict=True)]
    if params.kind is SystemKind.VP:
        T = params.T
        lo = (tg.a - a0 + eps) / T
        hi = (params.sqrt_k_b - a0 - eps) / T
        checks.append(_window_check("velocity_window", np.minimum(w - lo, hi - w), strict=False))
        checks.append(_window_check("angular_momentum_positive", l, strict=True))
    else:
        ha0 = params.h * a0
        # offsets from -a0^3 keep the margin free of cancellation at |w| ~ a0^3
        off = w + a0**3
        checks.append(_window_check("velocity_window", np.minimum(off + ha0, ha0 - off), strict=True))
        l_sup = params.delta**2 * (a0 + eps) ** 2
        checks.append(_window_check("angular_momentum_support", np.minimum(l, l_sup - l), strict=False))
        literal = (ha0 - eps) * (a0 - eps) ** 2
        checks.append(_window_check("angular_momentum_literal", literal - l, strict=True, gating=False))
    return ValidationFragment(checks)
