import dataclasses
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from vpfocus.ensemble import Ensemble
from vpfocus.errors import DomainError, SamplingError
from vpfocus.initdata import (
    TargetSpec, bump_mass, cutoff, derive_parameters, f0_arrays, f0_eval, rho0_radial, sample_ensemble,
    scaled_bump, smooth_step, support_box, validate_initial,
)
from vpfocus.phase import PhasePoint, SystemKind

SPEC = TargetSpec(1.0, 10.0, 1.0, 2.0, 3.0)
# 4 pi int_0^1 q^2 exp(-1/(1-q^2)) dq, mpmath at 30 digits
BUMP_MASS_REF = 0.4410888872766044004562838


@pytest.fixture(scope="module")
def vp():
    return derive_parameters("vp", SPEC)


@pytest.fixture(scope="module")
def rvp():
    return derive_parameters("rvp", SPEC)


@pytest.fixture(scope="module")
def vp_ens(vp):
    return sample_ensemble(vp, (32, 32, 8))


@pytest.fixture(scope="module")
def rvp_ens(rvp):
    return sample_ensemble(rvp, (32, 32, 8))


def targets():
    @st.composite
    def build(draw):
        a = draw(st.floats(0.1, 5.0))
        b = a * (1.0 + draw(st.floats(0.05, 3.0)))
        c = b * (1.0 + draw(st.floats(0.01, 2.0)))
        return TargetSpec(draw(st.floats(0.1, 10.0)), draw(st.floats(0.5, 100.0)), a, b, c)
    return build()


def mp_vp_a0(C1, C2, a, b, c):
    mp.mp.dps = 40
    C1, C2, a, b, c = (mp.mpf(x) for x in (C1, C2, a, b, c))
    s = mp.sqrt(a**2 + b**2) - mp.sqrt(2) * a
    return max(
        s / (8 * mp.sqrt(2)) + c,
        1 / C1,
        3 * mp.sqrt(2) * mp.pi * s / C1,
        mp.mpf(2) ** (mp.mpf(-11) / 6) * mp.cbrt(mp.pi) * s * C1 ** (mp.mpf(-1) / 3),
        16 * mp.sqrt(2) * (b**3 - a**3) * C2 / (3 * s),
        4 * mp.sqrt(2) * b**2 * C2 / (mp.pi * s),
    )


# --- targets and parameters ------------------------------------------------

@pytest.mark.parametrize("args", [(1, 10, 2, 1, 3), (1, 10, 1, 2, 2), (0, 10, 1, 2, 3), (1, -1, 1, 2, 3),
                                  (1, 10, 0, 2, 3), (1, 10, 1, 2, math.inf)])
def test_target_spec_rejects(args):
    with pytest.raises(DomainError):
        TargetSpec(*args)


def test_vp_k_and_eps(vp):
    assert vp.k == 0.625
    assert vp.eps == pytest.approx((math.sqrt(5) - math.sqrt(2)) / (8 * math.sqrt(2)), rel=1e-14)
    assert vp.eps == pytest.approx(0.0726424, abs=1e-7)


def test_rvp_k_and_eps(rvp):
    assert rvp.k == 0.625
    assert rvp.eps == pytest.approx((math.sqrt(5) - math.sqrt(2)) / (4 * math.sqrt(2)), rel=1e-14)
    assert rvp.eps == pytest.approx(0.145285, abs=1e-6)


def test_vp_a0_matches_high_precision_max(vp):
    assert vp.a0 == pytest.approx(float(mp_vp_a0(1, 10, 1, 2, 3)), rel=1e-13)
    assert vp.a0 == pytest.approx(642.4, abs=0.05)
    assert max(vp.a0_terms, key=vp.a0_terms.get) == "density_C2"


def test_vp_derived_constants(vp):
    assert vp.d == pytest.approx(0.5 * (1 + math.sqrt(0.625) * 2), rel=1e-15)
    assert vp.delta == pytest.approx(2 * vp.eps, rel=1e-14)
    assert vp.T < min(v for k, v in vp.T_terms.items() if k != "l_max")
    assert vp.l_max == pytest.approx((vp.a0 + vp.eps) ** 2 * vp.delta**2 / vp.T**2, rel=1e-14)
    assert vp.N is None and vp.h is None


def test_rvp_derived_constants(rvp):
    a0, eps = rvp.a0, rvp.eps
    assert rvp.N == pytest.approx((a0 - eps - 1) / (a0 + eps - math.sqrt(0.625) * 2), rel=1e-14)
    assert rvp.N > 1
    cap = min((rvp.N - 1) * a0**2 / (2 * (rvp.N + 1)), (math.sqrt(rvp.N) - 1) * a0**2 / (1 + math.sqrt(rvp.N)))
    assert rvp.h == pytest.approx(0.5 * cap, rel=1e-12)
    assert rvp.delta == pytest.approx(rvp.h * a0 - eps, rel=1e-14) and rvp.delta > 0
    assert rvp.d == a0**3 - a0
    lo, hi = rvp.T_terms["lower"], rvp.T_terms["upper"]
    assert lo <= rvp.T <= hi


@pytest.mark.parametrize("kind", ["vp", "rvp"])
def test_safety_factor_scales_a0(kind):
    base = derive_parameters(kind, SPEC)
    big = derive_parameters(kind, SPEC, safety_factor=2.0)
    assert big.a0 == pytest.approx(2 * base.a0, rel=1e-15)
    with pytest.raises(DomainError):
        derive_parameters(kind, SPEC, safety_factor=0.5)


@settings(max_examples=60, deadline=None)
@given(targets())
def test_vp_window_nonempty(spec):
    p = derive_parameters("vp", spec)
    assert p.eps < (p.sqrt_k_b - spec.a) / 2
    assert (p.sqrt_k_b - p.a0 - p.eps) / p.T > (spec.a - p.a0 + p.eps) / p.T
    margins = dict(p.constraints)
    assert margins.pop("a0_minus_eps_above_c") >= 0
    assert all(m > 0 for m in margins.values())


@settings(max_examples=60, deadline=None)
@given(targets())
def test_rvp_momentum_and_energy_ratios(spec):
    p = derive_parameters("rvp", spec)
    hi, lo = p.a0**3 + p.h * p.a0, p.a0**3 - p.h * p.a0
    assert hi / lo <= math.sqrt(p.N) + 1e-12
    assert (2 + hi**2) / (1 + lo**2) <= p.N + 1e-12
    assert p.T_terms["lower"] <= p.T <= p.T_terms["upper"]
    assert all(m >= 0 for m in p.constraints.values())


def test_to_dict_is_flat_with_term_breakdown(vp):
    d = vp.to_dict()
    assert d["kind"] == "vp" and d["a0"] == vp.a0 and d["C2"] == 10.0
    assert set(d["a0_terms"]) == {"eps_plus_c", "inv_C1", "field_linear_C1", "field_cubic_C1", "density_C2", "field_C2"}


# --- profiles --------------------------------------------------------------

def test_bump_mass_matches_mpmath():
    assert bump_mass() == pytest.approx(BUMP_MASS_REF, rel=1e-13)


@pytest.mark.parametrize("kind", ["vp", "rvp"])
def test_bump_normalisation(kind, vp, rvp):
    p = vp if kind == "vp" else rvp
    target = p.T**3 / (2 * p.a0) if kind == "vp" else 1 / (2 * p.a0)
    val, _ = integrate.quad(
        lambda q: 4 * math.pi * q * q * float(scaled_bump(q * q, p.bump_scale, p.delta)),
        0.0, p.delta, epsabs=0.0, epsrel=1e-12, limit=200,
    )
    assert val == pytest.approx(target, rel=1e-8)


def test_smooth_step_and_cutoff():
    assert smooth_step(-0.5) == 0.0 and smooth_step(1.5) == 1.0
    assert smooth_step(0.5) == pytest.approx(0.5, abs=1e-15)
    t = np.linspace(0, 1, 201)
    assert np.all(np.diff(smooth_step(t)) >= 0)
    a0, eps = 10.0, 1.0
    assert cutoff(10.4, a0, eps) == 1.0 and cutoff(9.6, a0, eps) == 1.0
    assert cutoff(9.0, a0, eps) == 0.0 and cutoff(11.0, a0, eps) == 0.0
    assert 0 < cutoff(9.2, a0, eps) < 1


def test_f0_zero_outside_radius_window(vp, rvp):
    for p in (vp, rvp):
        (r_lo, r_hi), (w_lo, w_hi), _ = support_box(p)
        w_mid = 0.5 * (w_lo + w_hi)
        assert f0_eval(p, PhasePoint(r_lo, w_mid, 0.0)) == 0.0
        assert f0_eval(p, PhasePoint(r_hi, w_mid, 0.0)) == 0.0
        assert f0_eval(p, PhasePoint(r_hi + 1, w_mid, 0.0)) == 0.0


def test_vp_f0_centre_and_edge(vp):
    centre = PhasePoint(vp.a0, (vp.d - vp.a0) / vp.T, 0.0)
    assert f0_eval(vp, centre) == pytest.approx(vp.bump_scale * math.exp(-1) / vp.delta**3, rel=1e-12)
    edge = PhasePoint(vp.a0, (vp.d + vp.delta - vp.a0) / vp.T, 0.0)
    assert f0_eval(vp, edge) == 0.0


def test_f0_nonnegative_on_box(rvp):
    rng = np.random.default_rng(1)
    box = support_box(rvp)
    pts = [rng.uniform(lo, hi, 5000) for lo, hi in box]
    f = f0_arrays(rvp, *pts)
    assert np.all(np.isfinite(f)) and np.all(f >= 0) and np.any(f > 0)


def test_vp_f0_smooth_along_velocity(vp):
    w_lo, w_hi = support_box(vp)[1]
    w = np.linspace(w_lo, w_hi, 4001)
    f = f0_arrays(vp, np.full_like(w, vp.a0), w, np.zeros_like(w))
    step = np.max(np.abs(np.diff(f)))
    assert step < 0.01 * f.max()


# --- sampling --------------------------------------------------------------

@pytest.mark.parametrize("which", ["vp", "rvp"])
def test_sampled_mass_in_analytic_range(which, vp, rvp, vp_ens, rvp_ens):
    p, ens = (vp, vp_ens) if which == "vp" else (rvp, rvp_ens)
    lo = 2 * math.pi * p.a0 * p.eps + (math.pi / 6) * p.eps**3 / p.a0
    hi = 8 * math.pi * p.a0 * p.eps + (8 * math.pi / 3) * p.eps**3 / p.a0
    assert 0.99 * lo <= ens.total_mass <= 1.01 * hi
    assert np.all((ens.r > p.a0 - p.eps) & (ens.r < p.a0 + p.eps))
    assert np.all(ens.mu > 0)


def test_vp_mass_lower_bound_at_default_grid(vp):
    ens = sample_ensemble(vp)
    assert ens.total_mass >= 2 * math.pi * vp.a0 * vp.eps
    assert 2 * math.pi * vp.a0 * vp.eps == pytest.approx(293.2, abs=0.05)
    assert 10_000 <= len(ens) <= 100_000


def test_mass_converges_at_second_order(vp):
    exact = 2 * math.pi / vp.a0 * integrate.quad(
        lambda r: float(cutoff(r, vp.a0, vp.eps)) * r * r, vp.a0 - vp.eps, vp.a0 + vp.eps,
        epsabs=0.0, epsrel=1e-13, limit=200,
    )[0]
    errs = [abs(sample_ensemble(vp, (n, n, n // 4)).total_mass - exact) for n in (16, 32, 64)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.5 < q < 4.5 for q in ratios), ratios


def test_weight_floor_reports_truncation(vp):
    full = sample_ensemble(vp, (16, 16, 4), weight_floor=0.0)
    cut = sample_ensemble(vp, (16, 16, 4), weight_floor=1e-3)
    assert len(cut) < len(full)
    assert cut.total_mass + cut.truncated_mass == pytest.approx(full.total_mass, rel=1e-13)
    assert full.truncated_mass == 0.0


def test_sampling_errors(vp):
    with pytest.raises(DomainError):
        sample_ensemble(vp, (1, 8, 8))
    with pytest.raises(SamplingError):
        sample_ensemble(dataclasses.replace(vp, bump_scale=0.0), (4, 4, 4))


def test_sampling_is_deterministic(vp):
    a = sample_ensemble(vp, (16, 16, 4))
    b = sample_ensemble(vp, (16, 16, 4))
    for name in ("r", "w", "l", "mu"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


# --- density quadrature ----------------------------------------------------

@pytest.mark.parametrize("which, frac", [("vp", 0.0), ("vp", 0.4), ("rvp", -0.3)])
def test_rho0_plateau(which, frac, vp, rvp):
    p = vp if which == "vp" else rvp
    assert rho0_radial(p, p.a0 + frac * p.eps) == pytest.approx(1 / (2 * p.a0), rel=1e-6)


def test_rho0_outside_and_capped(vp):
    assert rho0_radial(vp, vp.a0 + vp.eps) == 0.0
    assert rho0_radial(vp, 1.0) == 0.0
    assert rho0_radial(vp, vp.a0 + 0.75 * vp.eps) <= 1 / vp.a0
    with pytest.raises(DomainError):
        rho0_radial(vp, 0.0)


# --- validation ------------------------------------------------------------

def test_sampled_ensembles_validate(vp, rvp, vp_ens, rvp_ens):
    frag = validate_initial(vp_ens, vp)
    assert frag.passed and all(c.passed for c in frag.checks)
    frag = validate_initial(rvp_ens, rvp)
    assert frag.passed
    assert {c.name for c in frag.checks if c.gating} == {"radius_window", "velocity_window", "angular_momentum_support"}


def _one(kind, r, w, l):
    return Ensemble(kind=kind, r=np.array([r]), w=np.array([w]), l=np.array([l]), mu=np.array([1.0]))


def test_velocity_violation_flagged(vp):
    frag = validate_initial(_one(SystemKind.VP, vp.a0, 0.0, 1.0), vp)
    vel = next(c for c in frag.checks if c.name == "velocity_window")
    assert not frag.passed and not vel.passed and vel.violators == (0,)


def test_radius_violation_flagged(vp):
    frag = validate_initial(_one(SystemKind.VP, SPEC.c, (vp.d - SPEC.c) / vp.T, 1.0), vp)
    rad = next(c for c in frag.checks if c.name == "radius_window")
    assert not rad.passed and rad.n_violations == 1


def test_zero_angular_momentum_flagged(vp):
    frag = validate_initial(_one(SystemKind.VP, vp.a0, (vp.d - vp.a0) / vp.T, 0.0), vp)
    assert not frag.passed
