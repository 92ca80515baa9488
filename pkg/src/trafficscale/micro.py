"""First order car-following dynamics on a single road and on networks.

Every vehicle has the same length and adjusts its speed to the distance from
the vehicle ahead: speed = v_max * (1 - vehicle_len / gap).  The front
vehicle drives at v_max.  Time stepping is explicit Euler with a fixed step,
shortened once at the end so the elapsed time is exact.

On a network each vehicle belongs to a population that follows one path.
Distances are measured in path coordinates and the vehicle ahead may belong
to any population whose current arc lies on the follower's path, so vehicles
merge, interleave and occasionally overlap when they join from different
arcs.  The extended speed law treats gaps at or below one vehicle length as
stopping, which keeps overlapping vehicles in place until space opens up.
Past the final arc a path continues on the virtual extension of its last
arc, where the same law applies; a vehicle with nobody ahead drives at
v_max.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .network import Path
from .scaling import OVERLAP_TOL


def default_dt(v_max: float, vehicle_len: float) -> float:
    """Euler step keeping every displacement below a quarter vehicle length."""
    return min(0.01, vehicle_len / (4.0 * v_max))


@dataclass(frozen=True)
class MicroParams:
    """Vehicle length, speed limit and Euler step size."""

    v_max: float
    vehicle_len: float
    dt: Optional[float] = None

    def __post_init__(self):
        if not (np.isfinite(self.v_max) and self.v_max > 0.0):
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        if not (np.isfinite(self.vehicle_len) and self.vehicle_len > 0.0):
            raise ValueError(f"vehicle_len must be positive, got {self.vehicle_len}")
        if self.dt is None:
            object.__setattr__(self, "dt", default_dt(self.v_max, self.vehicle_len))
        elif not (np.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt must be positive, got {self.dt}")


def follow_velocity(gap, params: MicroParams):
    """Speed adopted behind a leader at distance ``gap`` (gap >= vehicle_len)."""
    return params.v_max * (1.0 - params.vehicle_len / np.asarray(gap, dtype=float))


def follow_velocity_ext(gap, params: MicroParams):
    """Speed law extended by zero to gaps at or below one vehicle length."""
    gap = np.asarray(gap, dtype=float)
    with np.errstate(divide="ignore"):
        w = np.where(gap > params.vehicle_len, params.v_max * (1.0 - params.vehicle_len / gap), 0.0)
    return w if w.ndim else float(w)


@dataclass(frozen=True, eq=False)
class MicroRoadState:
    """Ascending vehicle positions on a single road, gaps >= vehicle_len."""

    positions: np.ndarray
    params: MicroParams

    def __post_init__(self):
        y = np.asarray(self.positions, dtype=float)
        if y.ndim != 1 or y.size < 1:
            raise ValueError("positions must be a nonempty 1d array")
        if not np.all(np.isfinite(y)):
            raise ValueError("positions must be finite")
        gaps = np.diff(y)
        if gaps.size and gaps.min() < self.params.vehicle_len - OVERLAP_TOL:
            raise ValueError("vehicles overlap: a gap is smaller than the vehicle length")
        object.__setattr__(self, "positions", y)

    @property
    def count(self) -> int:
        return int(self.positions.size)


def step_road(state: MicroRoadState, dt: Optional[float] = None) -> MicroRoadState:
    """One synchronous Euler step on a single road."""
    h = state.params.dt if dt is None else dt
    y = _step_road_arrays(state.positions, state.params, h)
    return MicroRoadState(y, state.params)


def _step_road_arrays(y: np.ndarray, params: MicroParams, h: float) -> np.ndarray:
    out = y.copy()
    if y.size > 1:
        out[:-1] += h * params.v_max * (1.0 - params.vehicle_len / (y[1:] - y[:-1]))
    out[-1] += h * params.v_max
    return out


@dataclass(frozen=True, eq=False)
class MicroNetworkState:
    """One position vector per population, each following its own path.

    Coordinates are path coordinates, strictly ascending within a
    population.  Gaps below one vehicle length are legal here because
    populations merging from different arcs may overlap.
    """

    populations: tuple
    paths: tuple
    params: MicroParams

    def __post_init__(self):
        if len(self.populations) != len(self.paths) or not self.populations:
            raise ValueError("need one position vector per path")
        pops = []
        for k, coords in enumerate(self.populations):
            y = np.asarray(coords, dtype=float)
            if y.ndim != 1 or y.size < 1:
                raise ValueError(f"population {k}: positions must be a nonempty 1d array")
            if not np.all(np.isfinite(y)) or y.min() < 0.0:
                raise ValueError(f"population {k}: coordinates must be finite and nonnegative")
            if y.size > 1 and np.any(np.diff(y) <= 0.0):
                raise ValueError(f"population {k}: coordinates must be strictly ascending")
            pops.append(y)
        object.__setattr__(self, "populations", tuple(pops))
        object.__setattr__(self, "paths", tuple(self.paths))

    @cached_property
    def _conversions(self) -> list:
        return _conversion_tables(self.paths)

    @property
    def count(self) -> int:
        return sum(int(y.size) for y in self.populations)


def _conversion_tables(paths: tuple) -> list:
    """For every path pair (viewer, mover) the per-arc coordinate shifts.

    Entry [viewer][mover] holds (starts, length, shift, ext_shift): a mover
    coordinate y on arc k maps to y + shift[k] on the viewer's path (NaN when
    the arc is off that path), and a coordinate past the mover's length maps
    to y + ext_shift when both paths end on the same arc.
    """
    tables = []
    for pa in paths:
        row = []
        for pb in paths:
            shift = np.array(
                [np.nan if pa.start_of(a.id) is None else pa.start_of(a.id) - float(sb) for a, sb in zip(pb.arcs, pb.starts)]
            )
            ext_shift = pa.length - pb.length if pa.final_arc.id == pb.final_arc.id else np.nan
            row.append((np.asarray(pb.starts, dtype=float), pb.length, shift, ext_shift))
        tables.append(row)
    return tables


def _coords_on_path(y: np.ndarray, table) -> np.ndarray:
    """Convert mover coordinates to viewer path coordinates (NaN off path)."""
    starts, length, shift, ext_shift = table
    k = np.searchsorted(starts, y, side="right") - 1
    c = y + shift[k]
    past = y > length
    if past.any():
        c = np.where(past, y + ext_shift, c)
    return c


def _network_speeds(pops: list, tables: list, params: MicroParams) -> list:
    """Synchronous speeds for every population from the current coordinates."""
    speeds = []
    for alpha, ya in enumerate(pops):
        parts = [ya]
        for beta, yb in enumerate(pops):
            if beta == alpha:
                continue
            c = _coords_on_path(yb, tables[alpha][beta])
            c = c[np.isfinite(c)]
            if c.size:
                parts.append(c)
        allc = np.sort(np.concatenate(parts)) if len(parts) > 1 else parts[0]
        idx = np.searchsorted(allc, ya, side="right")
        has_next = idx < allc.size
        d = np.where(has_next, allc[np.minimum(idx, allc.size - 1)] - ya, np.inf)
        with np.errstate(divide="ignore"):
            w = np.where(d > params.vehicle_len, params.v_max * (1.0 - params.vehicle_len / d), 0.0)
        speeds.append(w)
    return speeds


def step_network(state: MicroNetworkState, dt: Optional[float] = None) -> MicroNetworkState:
    """One synchronous Euler step for all populations."""
    h = state.params.dt if dt is None else dt
    pops = list(state.populations)
    speeds = _network_speeds(pops, state._conversions, state.params)
    new = tuple(y + h * w for y, w in zip(pops, speeds))
    return MicroNetworkState(new, state.paths, state.params)


def next_vehicle(state: MicroNetworkState, i: int, alpha: int) -> Optional[tuple]:
    """The vehicle ahead of vehicle ``i`` of population ``alpha``.

    Returns (vehicle index, population index) of the vehicle with the
    smallest path coordinate strictly ahead on the follower's path, breaking
    ties by population then by index, or None when nobody is ahead.
    """
    y = float(state.populations[alpha][i])
    tables = state._conversions
    best = None
    for beta, yb in enumerate(state.populations):
        c = yb if beta == alpha else _coords_on_path(yb, tables[alpha][beta])
        ahead = np.where(np.isfinite(c) & (c > y))[0]
        if ahead.size == 0:
            continue
        j = int(ahead[np.argmin(c[ahead])])
        if best is None or c[j] < best[0]:
            best = (float(c[j]), j, beta)
    if best is None:
        return None
    return best[1], best[2]


def _step_plan(t_f: float, dt: float) -> tuple:
    """Number of steps and the shortened final step so the total is t_f."""
    if t_f < 0.0 or not np.isfinite(t_f):
        raise ValueError(f"final time must be finite and nonnegative, got {t_f}")
    if t_f == 0.0:
        return 0, dt
    n = max(1, math.ceil(t_f / dt))
    while n > 1 and (n - 1) * dt >= t_f:
        n -= 1
    return n, t_f - (n - 1) * dt


def simulate_micro(state, t_f: float):
    """Advance a road or network state to time ``t_f`` exactly."""
    nsteps, dt_last = _step_plan(t_f, state.params.dt)
    if nsteps == 0:
        return state
    if isinstance(state, MicroRoadState):
        y = state.positions
        for k in range(nsteps):
            h = state.params.dt if k < nsteps - 1 else dt_last
            y = _step_road_arrays(y, state.params, h)
        return MicroRoadState(y, state.params)
    if isinstance(state, MicroNetworkState):
        pops = list(state.populations)
        tables = state._conversions
        for k in range(nsteps):
            h = state.params.dt if k < nsteps - 1 else dt_last
            speeds = _network_speeds(pops, tables, state.params)
            pops = [y + h * w for y, w in zip(pops, speeds)]
        return MicroNetworkState(tuple(pops), state.paths, state.params)
    raise TypeError(f"cannot simulate {type(state).__name__}")
