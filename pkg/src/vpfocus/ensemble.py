"""Weighted shell ensembles: the discrete stand-in for f(t, r, w, l)."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .phase import PhasePoint, SystemKind


@dataclass(frozen=True)
class Shell:
    point: PhasePoint
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise DomainError(f"shell weight must be > 0, got {self.mu!r}")


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Struct-of-arrays shell set. Shell ``i`` keeps index ``i`` for its whole life."""

    kind: SystemKind
    r: np.ndarray
    w: np.ndarray
    l: np.ndarray
    mu: np.ndarray
    t: float = 0.0
    truncated_mass: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.r.shape[0]
        if any(a.shape != (n,) for a in (self.w, self.l, self.mu)):
            raise DomainError("ensemble arrays must be 1-D and of equal length")
        if n and not np.all(self.r > 0):
            raise DomainError("all shell radii must be > 0")

    @classmethod
    def from_shells(cls, kind, shells, t=0.0) -> "Ensemble":
        shells = list(shells)
        return cls(
            kind=SystemKind.parse(kind),
            r=np.array([s.point.r for s in shells], dtype=float),
            w=np.array([s.point.w for s in shells], dtype=float),
            l=np.array([s.point.l for s in shells], dtype=float),
            mu=np.array([s.mu for s in shells], dtype=float),
            t=float(t),
        )

    def __len__(self):
        return self.r.shape[0]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.mu))

    def shell(self, i: int) -> Shell:
        return Shell(PhasePoint(float(self.r[i]), float(self.w[i]), float(self.l[i])), float(self.mu[i]))

    @property
    def shells(self) -> list[Shell]:
        return [self.shell(i) for i in range(len(self))]

    def advanced(self, r, w, t) -> "Ensemble":
        """Same shells (l and mu shared, never copied) at a new state and time."""
        return replace(self, r=r, w=w, t=float(t))
