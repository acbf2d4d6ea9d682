"""Reduced phase space (r, w, l) and the characteristic right-hand sides.

``r`` is the radius, ``w`` the radial momentum (negative = inward) and ``l``
the squared angular momentum, which is conserved along characteristics.
Scalar helpers operate on :class:`PhasePoint`; the ``*_arrays`` variants are
the vectorised forms used by the integrators.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularityError

R_MIN_DEFAULT = 1e-9


class SystemKind(str, enum.Enum):
    VP = "vp"
    RVP = "rvp"

    @classmethod
    def parse(cls, value) -> "SystemKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise DomainError(f"unknown system kind {value!r}; expected 'vp' or 'rvp'") from None


@dataclass(frozen=True)
class PhasePoint:
    r: float
    w: float
    l: float

    def __post_init__(self):
        for name in ("r", "w", "l"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"PhasePoint.{name} must be finite, got {getattr(self, name)!r}")
        if self.r <= 0:
            raise DomainError(f"PhasePoint.r must be > 0, got {self.r!r}")
        if self.l < 0:
            raise DomainError(f"PhasePoint.l must be >= 0, got {self.l!r}")


@dataclass(frozen=True)
class PhaseDerivative:
    dr: float
    dw: float
    dl: float = 0.0


def lorentz_root(p: PhasePoint) -> float:
    """sqrt(1 + w^2 + l/r^2), the relativistic energy per unit rest mass."""
    return math.sqrt(1.0 + p.w * p.w + p.l / (p.r * p.r))


def rhs(kind: SystemKind, p: PhasePoint, m: float, r_min: float = R_MIN_DEFAULT) -> PhaseDerivative:
    kind = SystemKind.parse(kind)
    if not math.isfinite(m) or m < 0:
        raise DomainError(f"enclosed charge must be finite and >= 0, got {m!r}")
    if p.r <= r_min:
        raise SingularityError(f"radius {p.r!r} below guard {r_min!r}")
    r3 = p.r * p.r * p.r
    field = m / (p.r * p.r)
    if kind is SystemKind.VP:
        return PhaseDerivative(p.w, p.l / r3 + field, 0.0)
    gamma = lorentz_root(p)
    return PhaseDerivative(p.w / gamma, p.l / (r3 * gamma) + field, 0.0)


def lorentz_root_arrays(r, w, l):
    return np.sqrt(1.0 + w * w + l / (r * r))


def rhs_arrays(kind: SystemKind, r, w, l, m):
    """Vectorised (dr, dw); dl is identically zero and not returned."""
    inv_r2 = 1.0 / (r * r)
    if kind is SystemKind.VP:
        return w, l * inv_r2 / r + m * inv_r2
    gamma = np.sqrt(1.0 + w * w + l * inv_r2)
    return w / gamma, l * inv_r2 / (r * gamma) + m * inv_r2
