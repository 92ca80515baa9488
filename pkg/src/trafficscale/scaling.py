"""Conversions between the vehicle scale and the density scale.

A traffic state appears in three forms here:

* a piecewise constant density with values in [0, 1] (macroscopic),
* an ascending vector of vehicle positions (microscopic),
* a discrete measure, i.e. weighted atoms on the line or on a network,
  which is the common currency for transport distances.

With ``n`` vehicles representing a total mass ``M`` every vehicle has length
``M / (n - 1)``.  ``discretize`` places vehicles so that exactly one vehicle
length of mass sits between consecutive positions, anchoring the last vehicle
at the right edge of the support.  ``antidiscretize`` goes back, spreading one
vehicle length of mass uniformly over every gap.  ``vehicle_measure`` and
``density_measure`` turn either representation into atoms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .network import NetworkPoint

#: slack used when checking that vehicle gaps respect the vehicle length
OVERLAP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PiecewiseDensity:
    """Piecewise constant density on the line.

    ``breakpoints`` has one more entry than ``values``; segment ``i`` spans
    [breakpoints[i], breakpoints[i+1]) with constant value ``values[i]`` in
    [0, 1].  The density vanishes outside the breakpoint range.  Leading and
    trailing zero segments are stripped on construction.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or vals.ndim != 1 or bp.size != vals.size + 1:
            raise ValueError("need k+1 breakpoints for k segment values")
        if bp.size < 2:
            raise ValueError("a density needs at least one segment")
        if not np.all(np.diff(bp) > 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(bp)):
            raise ValueError("breakpoints must be finite")
        if vals.min(initial=0.0) < -1e-12 or vals.max(initial=0.0) > 1.0 + 1e-9:
            raise ValueError("density values must lie in [0, 1]")
        vals = np.clip(vals, 0.0, 1.0)
        pos = np.nonzero(vals > 0.0)[0]
        if pos.size:
            lo, hi = pos[0], pos[-1] + 1
            bp, vals = bp[lo : hi + 1], vals[lo:hi]
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_blocks(cls, blocks: Sequence[tuple]) -> "PiecewiseDensity":
        """Assemble from (lo, hi, value) blocks; gaps between blocks are empty."""
        blocks = sorted((float(l), float(h), float(v)) for l, h, v in blocks)
        bp = []
        vals = []
        for lo, hi, v in blocks:
            if hi <= lo:
                raise ValueError(f"block [{lo}, {hi}] has nonpositive width")
            if bp and lo < bp[-1]:
                raise ValueError("density blocks overlap")
            if bp and lo > bp[-1]:
                vals.append(0.0)
                bp.append(lo)
            if not bp:
                bp.append(lo)
            vals.append(v)
            bp.append(hi)
        return cls(np.array(bp), np.array(vals))

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def mass(self) -> float:
        return float(np.dot(self.values, self.widths))

    @property
    def support(self) -> tuple[float, float]:
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    def at(self, x) -> np.ndarray:
        """Density value at x (right continuous, zero outside the support)."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        inside = (idx >= 0) & (idx < self.values.size)
        out = np.zeros_like(x, dtype=float)
        out[inside] = self.values[idx[inside]]
        return out if out.ndim else float(out)

    def shifted(self, delta: float) -> "PiecewiseDensity":
        return PiecewiseDensity(self.breakpoints + delta, self.values.copy())


def l1_distance(first: PiecewiseDensity, second: PiecewiseDensity) -> float:
    """Exact L1 distance between two piecewise constant densities."""
    cuts = np.union1d(first.breakpoints, second.breakpoints)
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    gap = np.abs(first.at(mids) - second.at(mids))
    return float(np.dot(gap, np.diff(cuts)))


def vehicle_length(total_mass: float, count: int) -> float:
    """Length of one vehicle when ``count`` vehicles carry ``total_mass``."""
    if count < 2:
        raise ValueError("at least two vehicles are required")
    if not (np.isfinite(total_mass) and total_mass > 0.0):
        raise ValueError(f"total mass must be positive, got {total_mass}")
    return total_mass / (count - 1)


def discretize(density: PiecewiseDensity, count: int) -> np.ndarray:
    """Vehicle positions packing one vehicle length of mass per gap.

    The last position is the right edge of the support and each position is
    found by exact inversion of the piecewise linear cumulative mass.  The
    density must be positive throughout the interior of its support,
    otherwise the required mass slabs are not attainable.
    """
    ell = vehicle_length(density.mass, count)
    if np.any(density.values <= 0.0):
        raise ValueError("density vanishes on an interior interval of its support")
    widths = density.widths
    cum = np.concatenate(([0.0], np.cumsum(density.values * widths)))
    total = cum[-1]
    targets = total - ell * np.arange(count - 1, -1, -1, dtype=float)
    targets = np.clip(targets, 0.0, total)
    idx = np.searchsorted(cum, targets, side="right") - 1
    idx = np.clip(idx, 0, density.values.size - 1)
    y = density.breakpoints[idx] + (targets - cum[idx]) / density.values[idx]
    y[-1] = density.breakpoints[-1]
    if not np.all(np.diff(y) > 0.0):
        raise ValueError("vehicle positions failed to come out strictly increasing")
    return y


def antidiscretize(positions: np.ndarray, vehicle_len: float) -> PiecewiseDensity:
    """Density carrying one vehicle length of mass uniformly over each gap."""
    y = np.asarray(positions, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise ValueError("need at least two vehicle positions")
    if not (np.isfinite(vehicle_len) and vehicle_len > 0.0):
        raise ValueError(f"vehicle length must be positive, got {vehicle_len}")
    gaps = np.diff(y)
    if np.any(gaps < vehicle_len - OVERLAP_TOL):
        raise ValueError("vehicles overlap: a gap is smaller than the vehicle length")
    vals = np.minimum(vehicle_len / gaps, 1.0)
    return PiecewiseDensity(y.copy(), vals)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative weighted atoms on the line or on a network.

    ``locations`` is a float array for line measures or a tuple of
    NetworkPoint for network measures.  ``position_spread`` records the
    largest span that was collapsed into a single atom during coarsening and
    bounds the positional error so introduced.
    """

    locations: Union[np.ndarray, tuple]
    masses: np.ndarray
    position_spread: float = 0.0

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        if np.any(masses < 0.0) or not np.all(np.isfinite(masses)):
            raise ValueError("atom masses must be finite and nonnegative")
        object.__setattr__(self, "masses", masses)
        locs = self.locations
        if not isinstance(locs, np.ndarray) and len(locs) and isinstance(locs[0], NetworkPoint):
            object.__setattr__(self, "locations", tuple(locs))
        else:
            object.__setattr__(self, "locations", np.asarray(locs, dtype=float))
        if len(self.locations) != masses.size:
            raise ValueError("locations and masses must have equal length")

    @property
    def is_network(self) -> bool:
        return isinstance(self.locations, tuple)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def size(self) -> int:
        return int(self.masses.size)


def vehicle_measure(state, vehicle_len: Optional[float] = None) -> DiscreteMeasure:
    """Atoms of one vehicle length of mass at every vehicle position.

    Accepts a position array together with ``vehicle_len``, a road state or a
    network state (the latter two carry their vehicle length themselves).
    Network states yield atoms at network points, populations concatenated in
    order.
    """
    if hasattr(state, "populations"):
        from .network import point_at

        ell = state.params.vehicle_len
        points = []
        for coords, path in zip(state.populations, state.paths):
            points.extend(point_at(path, float(s)) for s in coords)
        return DiscreteMeasure(tuple(points), np.full(len(points), ell))
    if hasattr(state, "positions"):
        y = np.asarray(state.positions, dtype=float)
        ell = state.params.vehicle_len
    else:
        y = np.asarray(state, dtype=float)
        if vehicle_len is None:
            raise ValueError("vehicle_len is required when passing bare positions")
        ell = float(vehicle_len)
    return DiscreteMeasure(y.copy(), np.full(y.size, ell))


def _pairwise_merge(coords: np.ndarray, masses: np.ndarray) -> tuple:
    """Merge neighbours (0,1), (2,3), ... at their barycenters.

    Returns the merged coordinates and masses plus the largest merged span.
    """
    m = coords.size
    pairs = m // 2
    even_c, odd_c = coords[0 : 2 * pairs : 2], coords[1 : 2 * pairs : 2]
    even_m, odd_m = masses[0 : 2 * pairs : 2], masses[1 : 2 * pairs : 2]
    tot = even_m + odd_m
    bary = (even_c * even_m + odd_c * odd_m) / tot
    span = float(np.max(np.abs(odd_c - even_c), initial=0.0))
    if m % 2:
        bary = np.append(bary, coords[-1])
        tot = np.append(tot, masses[-1])
    return bary, tot, span


def _absorb_tiny(coords: np.ndarray, masses: np.ndarray, floor: float) -> tuple:
    """Fold atoms lighter than ``floor`` into a neighbouring heavier atom.

    Coordinates must be sorted ascending.  A run of light atoms is folded
    into the next atom at or above the floor at the mass weighted barycenter;
    a trailing run folds backwards into the last surviving atom.  Mass is
    preserved exactly up to rounding.  Returns coordinates, masses and the
    largest distance between merged partners.
    """
    big = masses >= floor
    if floor <= 0.0 or bool(big.all()):
        return coords, masses, 0.0
    total = float(masses.sum())
    if not big.any():
        bary = float(np.dot(coords, masses) / total)
        span = float(coords[-1] - coords[0])
        return np.array([bary]), np.array([total]), span
    out_c: list = []
    out_m: list = []
    acc_m = 0.0
    acc_mom = 0.0
    acc_lo = math.inf
    acc_hi = -math.inf
    span = 0.0
    for c, x, survives in zip(coords, masses, big):
        if survives:
            tot = x + acc_m
            out_c.append((c * x + acc_mom) / tot)
            out_m.append(tot)
            if acc_m > 0.0:
                span = max(span, c - acc_lo)
            acc_m = 0.0
            acc_mom = 0.0
            acc_lo = math.inf
            acc_hi = -math.inf
        else:
            acc_m += x
            acc_mom += c * x
            acc_lo = min(acc_lo, c)
            acc_hi = max(acc_hi, c)
    if acc_m > 0.0:
        tot = out_m[-1] + acc_m
        out_c[-1] = (out_c[-1] * out_m[-1] + acc_mom) / tot
        out_m[-1] = tot
        span = max(span, acc_hi - out_c[-1])
    return np.array(out_c), np.array(out_m), span


TINY_ATOM_RTOL = 1e-14


def density_measure(density, max_atoms: int = 2000) -> DiscreteMeasure:
    """One atom per cell or segment at its midpoint, mass = density * width.

    Zero mass atoms are dropped, and atoms lighter than TINY_ATOM_RTOL of the
    total mass are folded into a neighbouring atom on the same arc, which
    keeps numerically dead cells from inflating downstream transport problems.
    When more than ``max_atoms`` atoms remain after that, neighbouring atoms
    on the same arc are merged pairwise at mass weighted barycenters, round
    after round, until the budget is met.  The largest distance any merge
    covered is reported on the result as ``position_spread``.

    Accepts a PiecewiseDensity or any grid object exposing ``cell_atoms()``.
    """
    if max_atoms < 1:
        raise ValueError("max_atoms must be at least 1")
    if hasattr(density, "cell_atoms"):
        groups = list(density.cell_atoms())
    elif isinstance(density, PiecewiseDensity):
        mids = 0.5 * (density.breakpoints[:-1] + density.breakpoints[1:])
        groups = [("line", None, 0.0, mids, density.values * density.widths)]
    else:
        raise TypeError(f"cannot build a density measure from {type(density).__name__}")

    cleaned = []
    total = 0.0
    for kind, arc_id, arc_len, coords, masses in groups:
        coords = np.asarray(coords, dtype=float)
        masses = np.asarray(masses, dtype=float)
        keep = masses > 0.0
        if keep.any():
            cleaned.append([kind, arc_id, arc_len, coords[keep], masses[keep]])
            total += float(masses[keep].sum())

    spread = 0.0
    floor = TINY_ATOM_RTOL * total
    for g in cleaned:
        g[3], g[4], span = _absorb_tiny(g[3], g[4], floor)
        spread = max(spread, span)
    while sum(g[3].size for g in cleaned) > max_atoms:
        mergeable = [g for g in cleaned if g[3].size > 1]
        if not mergeable:
            break
        for g in mergeable:
            g[3], g[4], span = _pairwise_merge(g[3], g[4])
            spread = max(spread, span)

    is_network = any(g[0] != "line" for g in cleaned)
    masses = np.concatenate([g[4] for g in cleaned]) if cleaned else np.empty(0)
    if not is_network:
        coords = np.concatenate([g[3] for g in cleaned]) if cleaned else np.empty(0)
        return DiscreteMeasure(coords, masses, position_spread=spread)
    points: list[NetworkPoint] = []
    for kind, arc_id, arc_len, coords, _ in cleaned:
        if kind == "ext":
            points.extend(NetworkPoint(arc_id, arc_len, float(c)) for c in coords)
        else:
            points.extend(NetworkPoint(arc_id, float(c)) for c in coords)
    return DiscreteMeasure(tuple(points), masses, position_spread=spread)
