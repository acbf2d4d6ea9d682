"""Density, field, sup norms and support extent of a shell ensemble."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import Ensemble
from .errors import BinningError, DomainError


@dataclass(frozen=True)
class RadialBinning:
    r_lo: float
    r_hi: float
    n_bins: int

    def __post_init__(self):
        if not (self.r_hi > self.r_lo >= 0):
            raise DomainError(f"need r_hi > r_lo >= 0, got [{self.r_lo}, {self.r_hi}]")
        if self.n_bins < 1:
            raise DomainError(f"n_bins must be >= 1, got {self.n_bins}")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.r_lo, self.r_hi, self.n_bins + 1)

    @classmethod
    def with_width(cls, lo, hi, width, r_shells=None):
        """Bins of a fixed width anchored at ``lo``, widened to cover every shell."""
        if r_shells is not None and len(r_shells):
            while lo > r_shells.min():
                lo -= width
            lo = max(lo, 0.0)
            hi = max(hi, float(r_shells.max()))
        n = max(1, int(math.ceil((hi - lo) / width * (1 - 1e-12))))
        return cls(lo, lo + n * width, n)


@dataclass
class Observables:
    bin_edges: np.ndarray
    rho: np.ndarray
    field_r: np.ndarray
    field: np.ndarray
    linf_rho: float
    linf_field: float
    r_min: float
    r_max: float
    total_mass: float

    def summary(self) -> dict:
        return {
            "linf_rho": self.linf_rho, "linf_field": self.linf_field, "r_min": self.r_min,
            "r_max": self.r_max, "total_mass": self.total_mass, "n_bins": int(self.rho.size),
        }


def _outer_mass(ens: Ensemble):
    """Radii (sorted) and the enclosed charge just above each, all ties included."""
    order = np.argsort(ens.r, kind="stable")
    rs = ens.r[order]
    m_plus = np.cumsum(ens.mu[order])
    # within a tie group the charge just above is the group's last cumulative value
    last = np.empty(rs.shape[0], dtype=bool)
    if rs.size:
        last[-1] = True
        np.not_equal(rs[1:], rs[:-1], out=last[:-1])
    idx = np.flatnonzero(last)
    return rs[idx], m_plus[idx]


def field_at(ens: Ensemble, r):
    """E(r) = m(r)/r^2 with half weight for shells sitting exactly at r."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(~(r_arr > 0)):
        raise DomainError("field radius must be > 0")
    order = np.argsort(ens.r, kind="stable")
    rs = ens.r[order]
    csum = np.concatenate(([0.0], np.cumsum(ens.mu[order])))
    below = csum[np.searchsorted(rs, r_arr, side="left")]
    upto = csum[np.searchsorted(rs, r_arr, side="right")]
    out = 0.5 * (below + upto) / r_arr**2
    return float(out) if out.ndim == 0 else out


def measure(ens: Ensemble, binning: RadialBinning) -> Observables:
    if len(ens) == 0:
        raise DomainError("cannot measure an empty ensemble")
    edges = binning.edges
    out = np.flatnonzero((ens.r < edges[0]) | (ens.r > edges[-1]))
    if out.size:
        raise BinningError(f"{out.size} shells outside [{edges[0]}, {edges[-1]}]", escapees=out[:50].tolist())
    mass, _ = np.histogram(ens.r, bins=edges, weights=ens.mu)
    vol = (4.0 * math.pi / 3.0) * (edges[1:] ** 3 - edges[:-1] ** 3)
    rho = mass / vol
    r_shell, m_plus = _outer_mass(ens)
    e_shell = m_plus / r_shell**2
    edge_pos = edges[edges > 0]
    e_edges = field_at(ens, edge_pos) if edge_pos.size else np.empty(0)
    field_r = np.concatenate((r_shell, edge_pos))
    field = np.concatenate((e_shell, np.atleast_1d(e_edges)))
    srt = np.argsort(field_r, kind="stable")
    return Observables(
        bin_edges=edges, rho=rho, field_r=field_r[srt], field=field[srt],
        linf_rho=float(rho.max()), linf_field=float(field.max()),
        r_min=float(ens.r.min()), r_max=float(ens.r.max()), total_mass=ens.total_mass,
    )


def write_profiles(obs: Observables, path) -> None:
    """Two CSV blocks in one file: ``r_mid,rho`` then ``r,E``."""
    path = Path(path)
    mids = 0.5 * (obs.bin_edges[1:] + obs.bin_edges[:-1])
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["r_mid", "rho"])
        wr.writerows((repr(float(a)), repr(float(b))) for a, b in zip(mids, obs.rho))
        wr.writerow([])
        wr.writerow(["r", "E"])
        wr.writerows((repr(float(a)), repr(float(b))) for a, b in zip(obs.field_r, obs.field))


def summary_json(obs: Observables) -> str:
    return json.dumps(obs.summary(), indent=2)
