"""Closed-form turning-time, envelope and concentration bounds.

All functions are exact formulas in the characteristic's initial data
(r, w, l) and the total charge M; nothing here integrates anything.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError


@dataclass(frozen=True)
class InitialDatum:
    r: float
    w: float
    l: float
    M: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.r, self.w, self.l, self.M)):
            raise DomainError(f"non-finite datum {self}")
        if not (self.r > 0 and self.w < 0 and self.l >= 0 and self.M >= 0):
            raise DomainError(f"need r > 0, w < 0, l >= 0, M >= 0; got {self}")

    @property
    def gamma_sq(self) -> float:
        return 1.0 + self.w**2 + self.l / self.r**2


@dataclass(frozen=True)
class RvpAuxiliary:
    D: float


def vp_t0_lower(d: InitialDatum) -> float:
    """r/|w| - sqrt(l + M r)/w^2; negative values are returned as-is (vacuous)."""
    return d.r / abs(d.w) - math.sqrt(d.l + d.M * d.r) / d.w**2


def vp_envelope(t: float, d: InitialDatum):
    """(upper bound on R(t)^2, lower bound on R(t)), valid for 0 <= t < T0."""
    upper_sq = (d.r + d.w * t) ** 2 + (d.l / d.r**2 + d.M / d.r) * t * t
    lower = 0.5 * d.l / d.r**3 * t * t + d.w * t + d.r
    return upper_sq, lower


def rvp_aux(d: InitialDatum) -> RvpAuxiliary:
    return RvpAuxiliary(d.l + d.M * d.r * math.sqrt(d.gamma_sq))


def rvp_t0_bounds(d: InitialDatum):
    if not d.l > 0:
        raise DomainError("the upper turning-time bound needs l > 0")
    D = rvp_aux(d).D
    lower = d.r * (1.0 - math.sqrt(D / (d.r**2 * d.w**2 + D)))
    upper = -d.w * d.r**3 * math.sqrt(d.gamma_sq) / d.l
    return lower, upper


def rvp_envelope(t: float, d: InitialDatum):
    """(upper bound on R^2, lower bound on R, cap on W^2 + l R^-2) for 0 <= t < T0."""
    g2 = d.gamma_sq
    D = rvp_aux(d).D
    upper_sq = (d.r - abs(d.w) / math.sqrt(g2) * t) ** 2 + D / (d.r**2 * g2) * t * t
    lower = d.l / (2.0 * d.r**3 * g2) * t * t + d.w / math.sqrt(g2) * t + d.r
    kinetic_cap = d.w**2 + d.l / d.r**2
    return upper_sq, lower, kinetic_cap


def concentration_bounds(M: float, a: float, b: float):
    """Lower bounds on sup density and sup field for charge M confined to [a, b]."""
    if not (b > a > 0):
        raise DomainError(f"need b > a > 0, got a={a}, b={b}")
    if M < 0:
        raise DomainError(f"need M >= 0, got {M}")
    return 3.0 * M / (4.0 * math.pi * (b**3 - a**3)), M / b**2
