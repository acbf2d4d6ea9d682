import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vpfocus.errors import DomainError, SingularityError
from vpfocus.phase import PhasePoint, SystemKind, lorentz_root, lorentz_root_arrays, rhs, rhs_arrays

radii = st.floats(1e-3, 1e3)
momenta = st.floats(-1e3, 1e3)
ang = st.floats(0.0, 1e4)
masses = st.floats(0.0, 1e4)


@pytest.mark.parametrize(
    "p, expected",
    [
        (PhasePoint(1.0, 0.0, 0.0), 1.0),
        (PhasePoint(1.0, 3.0, 0.0), math.sqrt(10.0)),
        (PhasePoint(2.0, -1.0, 4.0), math.sqrt(3.0)),
    ],
)
def test_lorentz_root_examples(p, expected):
    assert lorentz_root(p) == pytest.approx(expected, rel=1e-15)


def test_vp_rhs_examples():
    d = rhs(SystemKind.VP, PhasePoint(1.0, 0.0, 0.0), 0.0)
    assert (d.dr, d.dw, d.dl) == (0.0, 0.0, 0.0)
    d = rhs(SystemKind.VP, PhasePoint(2.0, -1.0, 4.0), 3.0)
    assert (d.dr, d.dw, d.dl) == (-1.0, 1.25, 0.0)


def test_rvp_rhs_example():
    d = rhs(SystemKind.RVP, PhasePoint(2.0, -1.0, 4.0), 3.0)
    assert d.dr == pytest.approx(-1 / math.sqrt(3), rel=1e-15)
    assert d.dw == pytest.approx(4 / (8 * math.sqrt(3)) + 0.75, rel=1e-15)
    assert d.dr == pytest.approx(-0.57735, abs=1e-5)
    assert d.dw == pytest.approx(1.03868, abs=1e-5)
    assert d.dl == 0.0


@pytest.mark.parametrize("r, w, l", [(0.0, 1.0, 0.0), (-1.0, 0.0, 0.0), (1.0, 0.0, -1.0), (math.nan, 0.0, 0.0),
                                     (1.0, math.inf, 0.0)])
def test_phase_point_rejects_bad_values(r, w, l):
    with pytest.raises(DomainError):
        PhasePoint(r, w, l)


def test_rhs_errors():
    with pytest.raises(DomainError):
        rhs(SystemKind.VP, PhasePoint(1.0, 0.0, 0.0), -1.0)
    with pytest.raises(SingularityError):
        rhs(SystemKind.VP, PhasePoint(1e-12, 0.0, 0.0), 0.0)


def test_kind_parse():
    assert SystemKind.parse("RVP") is SystemKind.RVP
    assert SystemKind.parse(SystemKind.VP) is SystemKind.VP
    with pytest.raises(DomainError):
        SystemKind.parse("gravity")


@given(radii, momenta, ang, masses)
def test_rhs_invariants(r, w, l, m):
    p = PhasePoint(r, w, l)
    vp = rhs(SystemKind.VP, p, m)
    rvp = rhs(SystemKind.RVP, p, m)
    assert vp.dl == 0.0 and rvp.dl == 0.0
    assert abs(rvp.dr) < 1.0
    assert lorentz_root(p) >= 1.0
    assert rvp.dw <= vp.dw * (1 + 1e-15)
    if l == 0:
        assert rvp.dw == vp.dw
    elif l / r**3 > 1e-12 * (m / r**2 + 1e-300) and lorentz_root(p) > 1 + 1e-12:
        assert rvp.dw < vp.dw


@given(st.lists(st.tuples(radii, momenta, ang, masses), min_size=1, max_size=20))
def test_array_forms_match_scalar(rows):
    r, w, l, m = (np.array(c) for c in zip(*rows))
    for kind in SystemKind:
        dr, dw = rhs_arrays(kind, r, w, l, m)
        for i in range(len(r)):
            d = rhs(kind, PhasePoint(r[i], w[i], l[i]), m[i])
            assert dr[i] == pytest.approx(d.dr, rel=1e-14)
            assert dw[i] == pytest.approx(d.dw, rel=1e-14)
    g = lorentz_root_arrays(r, w, l)
    assert np.all(g >= 1.0)
