"""Finite volume solvers for the kinematic wave traffic model.

Single road: the conservation law rho_t + (rho * v(rho))_x = 0 with
v(rho) = v_max * (1 - rho) is advanced by the Godunov scheme in
demand / supply form.  With flux f(rho) = v_max * rho * (1 - rho) and sonic
density 1/2, the interface flux is

    F(l, r) = min(demand(l), supply(r)),
    demand(l) = f(l) for l <= 1/2 else f(1/2),
    supply(r) = f(1/2) for r <= 1/2 else f(r).

The domain carries empty ghost cells on both ends, so mass is conserved as
long as nothing reaches the boundary.

Network: every path alpha carries its own density eta^alpha on path
coordinates; cells of different paths that cover the same stretch of the
same arc are shared.  The update uses the donor cell density and the
velocity of the receiving cell evaluated on the total density rho (sum over
paths through that physical cell):

    F^alpha_{j+1/2} = eta^alpha_j * v*(rho_{j+1}),   v*(r) = v_max * max(0, 1 - r),

so the total density may exceed 1 where paths overlap and the velocity then
clamps to zero.  Each path ends with a run of extension cells beyond its
last arc, sized so that no mass can reach the far end within the simulated
time; extension cells behave like ordinary shared cells of the final arc's
prolongation.

Both schemes are stable for dt <= cfl * dx / v_max with cfl = 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .network import RoadNetwork, Path
from .scaling import PiecewiseDensity

CFL_MAX = 0.5


def extended_velocity(r, v_max: float):
    """v_max * (1 - r), clamped to zero for densities at or above 1."""
    r = np.asarray(r, dtype=float)
    v = v_max * np.maximum(0.0, 1.0 - r)
    return v if v.ndim else float(v)


def _flux(rho, v_max: float):
    return v_max * rho * (1.0 - rho)


def godunov_flux(rho_left, rho_right, v_max: float):
    """Godunov interface flux in demand / supply form, sonic point 1/2."""
    l = np.asarray(rho_left, dtype=float)
    r = np.asarray(rho_right, dtype=float)
    f_sonic = 0.25 * v_max
    demand = np.where(l <= 0.5, _flux(l, v_max), f_sonic)
    supply = np.where(r <= 0.5, f_sonic, _flux(r, v_max))
    out = np.minimum(demand, supply)
    return out if out.ndim else float(out)


def _check_cfl(dt: float, dx: float, v_max: float) -> None:
    if dt > CFL_MAX * dx / v_max * (1.0 + 1e-12):
        raise ValueError(f"dt = {dt} violates the CFL bound {CFL_MAX} * dx / v_max = {CFL_MAX * dx / v_max}")


def _cells_of(length: float, dx: float, what: str) -> int:
    cells = round(length / dx)
    if cells < 1 or abs(cells * dx - length) > 1e-9 * max(1.0, length):
        raise ValueError(f"dx = {dx} does not divide the {what} length {length}")
    return cells


@dataclass(frozen=True, eq=False)
class RoadGrid:
    """Cell averaged density on the interval [a, b] with uniform cells."""

    a: float
    b: float
    dx: float
    v_max: float
    rho: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.v_max) and self.v_max > 0.0):
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        cells = _cells_of(self.b - self.a, self.dx, "interval")
        rho = np.asarray(self.rho, dtype=float)
        if rho.shape != (cells,):
            raise ValueError(f"expected {cells} cells, got array of shape {rho.shape}")
        if rho.min(initial=0.0) < -1e-12 or rho.max(initial=0.0) > 1.0 + 1e-12:
            raise ValueError("cell densities must lie in [0, 1]")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_density(cls, density: Optional[PiecewiseDensity], a: float, b: float, dx: float, v_max: float) -> "RoadGrid":
        """Exact cell averages of a piecewise constant density."""
        cells = _cells_of(b - a, dx, "interval")
        rho = np.zeros(cells)
        if density is not None:
            lo, hi = density.support
            if density.mass > 0.0 and (lo < a - 1e-9 or hi > b + 1e-9):
                raise ValueError(f"density support [{lo}, {hi}] is not inside [{a}, {b}]")
            rho = _cell_averages(density, a, cells, dx)
        return cls(a, b, dx, v_max, rho)

    @property
    def cells(self) -> int:
        return int(self.rho.size)

    @property
    def edges(self) -> np.ndarray:
        return self.a + self.dx * np.arange(self.cells + 1)

    @property
    def mass(self) -> float:
        return float(self.rho.sum() * self.dx)

    def cell_atoms(self):
        mids = self.a + self.dx * (np.arange(self.cells) + 0.5)
        return [("line", None, 0.0, mids, self.rho * self.dx)]

    def to_density(self) -> PiecewiseDensity:
        return PiecewiseDensity(self.edges, np.clip(self.rho, 0.0, 1.0))


def _cell_averages(density: PiecewiseDensity, left: float, cells: int, dx: float) -> np.ndarray:
    """Averages of a piecewise constant function over uniform cells, exact
    overlap integration segment by segment."""
    lo_edges = left + dx * np.arange(cells)
    hi_edges = lo_edges + dx
    rho = np.zeros(cells)
    for x0, x1, v in zip(density.breakpoints[:-1], density.breakpoints[1:], density.values):
        if v == 0.0:
            continue
        overlap = np.minimum(x1, hi_edges) - np.maximum(x0, lo_edges)
        rho += v * np.clip(overlap, 0.0, None)
    return np.clip(rho / dx, 0.0, 1.0)


def step_road_godunov(grid: RoadGrid, dt: float) -> RoadGrid:
    """One Godunov step with empty ghost cells on both ends."""
    _check_cfl(dt, grid.dx, grid.v_max)
    ext = np.concatenate(([0.0], grid.rho, [0.0]))
    flux = godunov_flux(ext[:-1], ext[1:], grid.v_max)
    rho = grid.rho - (dt / grid.dx) * (flux[1:] - flux[:-1])
    return RoadGrid(grid.a, grid.b, grid.dx, grid.v_max, rho)


@dataclass(frozen=True, eq=False)
class NetworkGrid:
    """Per path densities on shared physical cells of a road network.

    ``eta[alpha][j]`` is the density of path alpha's population in cell j of
    that path's grid, which spans the path and the extension of its final
    arc.  ``slots[alpha][j]`` is the physical cell index, shared between
    paths wherever they traverse the same arc stretch (extensions included).
    """

    net: RoadNetwork
    paths: tuple
    dx: float
    v_max: float
    eta: tuple
    slots: tuple
    slot_groups: tuple
    n_slots: int

    def __post_init__(self):
        if len(self.eta) != len(self.paths) or len(self.slots) != len(self.paths):
            raise ValueError("need one density and one slot array per path")
        etas = []
        for alpha, e in enumerate(self.eta):
            e = np.asarray(e, dtype=float)
            if e.shape != self.slots[alpha].shape:
                raise ValueError(f"path {alpha}: density and slot arrays differ in shape")
            if e.min(initial=0.0) < -1e-12 or not np.all(np.isfinite(e)):
                raise ValueError(f"path {alpha}: densities must be finite and nonnegative")
            etas.append(e)
        object.__setattr__(self, "eta", tuple(etas))

    @classmethod
    def from_path_densities(
        cls,
        net: RoadNetwork,
        paths: Sequence[Path],
        densities: Sequence[Optional[PiecewiseDensity]],
        dx: float,
        v_max: float,
        ext_length: float,
    ) -> "NetworkGrid":
        """Cell average one density per path and lay out shared cells.

        ``ext_length`` is the span of the virtual extension appended after
        each path's final arc.  Arc lengths and the extension length must be
        whole multiples of dx so that cells of overlapping paths line up.
        """
        if not (np.isfinite(v_max) and v_max > 0.0):
            raise ValueError(f"v_max must be positive, got {v_max}")
        if len(densities) != len(paths):
            raise ValueError("need exactly one initial density per path")
        arc_cells = {a.id: _cells_of(a.length, dx, f"arc {a.id!r}") for a in net.arcs}
        ext_cells = _cells_of(ext_length, dx, "extension length")
        slot_base: dict = {}
        slot_groups: list = []
        n_slots = 0
        for aid in sorted(arc_cells):
            slot_base[("a", aid)] = n_slots
            slot_groups.append(("a", aid, arc_cells[aid]))
            n_slots += arc_cells[aid]
        for aid in sorted({p.final_arc.id for p in paths}):
            slot_base[("e", aid)] = n_slots
            slot_groups.append(("e", aid, ext_cells))
            n_slots += ext_cells
        slots = []
        etas = []
        for path, density in zip(paths, densities):
            ranges = [slot_base[("a", a.id)] + np.arange(arc_cells[a.id]) for a in path.arcs]
            ranges.append(slot_base[("e", path.final_arc.id)] + np.arange(ext_cells))
            slot = np.concatenate(ranges).astype(np.intp)
            cells = slot.size
            if density is None:
                eta = np.zeros(cells)
            else:
                lo, hi = density.support
                if density.mass > 0.0 and (lo < -1e-9 or hi > path.length + 1e-9):
                    raise ValueError(f"path {path.index}: density support [{lo}, {hi}] is not inside [0, {path.length}]")
                eta = _cell_averages(density, 0.0, cells, dx)
            slots.append(slot)
            etas.append(eta)
        return cls(net, tuple(paths), dx, v_max, tuple(etas), tuple(slots), tuple(slot_groups), n_slots)

    @property
    def mass(self) -> float:
        return float(sum(e.sum() for e in self.eta) * self.dx)

    def path_masses(self) -> np.ndarray:
        return np.array([e.sum() * self.dx for e in self.eta])

    def slot_totals(self) -> np.ndarray:
        """Total density per physical cell, summed over the paths crossing it."""
        rho = np.zeros(self.n_slots)
        for slot, e in zip(self.slots, self.eta):
            rho += np.bincount(slot, weights=e, minlength=self.n_slots)
        return rho

    def cell_atoms(self):
        """Atoms of the total density, grouped per arc and per extension."""
        rho = self.slot_totals()
        groups = []
        base = 0
        for kind, aid, cells in self.slot_groups:
            mids = self.dx * (np.arange(cells) + 0.5)
            masses = rho[base : base + cells] * self.dx
            arc_len = self.net.arc(aid).length
            groups.append(("a" if kind == "a" else "ext", aid, arc_len, mids, masses))
            base += cells
        return groups


def total_density(grid: NetworkGrid, alpha: int, j: int) -> float:
    """Total density (all paths) in cell j of path alpha's grid."""
    return float(grid.slot_totals()[grid.slots[alpha][j]])


def step_network_multipath(grid: NetworkGrid, dt: float) -> NetworkGrid:
    """One donor cell step for all path densities on shared cells."""
    _check_cfl(dt, grid.dx, grid.v_max)
    etas = _step_network_arrays(list(grid.eta), grid, dt)
    return NetworkGrid(
        grid.net, grid.paths, grid.dx, grid.v_max, tuple(etas), grid.slots, grid.slot_groups, grid.n_slots
    )


def _step_network_arrays(etas: list, grid: NetworkGrid, dt: float) -> list:
    rho = np.zeros(grid.n_slots)
    for slot, e in zip(grid.slots, etas):
        rho += np.bincount(slot, weights=e, minlength=grid.n_slots)
    vstar = grid.v_max * np.maximum(0.0, 1.0 - rho)
    lam = dt / grid.dx
    out = []
    for slot, e in zip(grid.slots, etas):
        v_next = np.concatenate((vstar[slot[1:]], [grid.v_max]))
        f_out = e * v_next
        f_in = np.concatenate(([0.0], f_out[:-1]))
        out.append(e - lam * (f_out - f_in))
    return out


def simulate_macro(grid, t_f: float, cfl: float = CFL_MAX):
    """Advance a road or network grid to time ``t_f`` exactly.

    The step is cfl * dx / v_max with a shortened final step.  Cell bounds
    are checked after every step: road densities must stay in [0, 1] and
    path densities nonnegative.
    """
    if t_f < 0.0 or not np.isfinite(t_f):
        raise ValueError(f"final time must be finite and nonnegative, got {t_f}")
    if not (0.0 < cfl <= CFL_MAX):
        raise ValueError(f"cfl must lie in (0, {CFL_MAX}], got {cfl}")
    if t_f == 0.0:
        return grid
    dt = cfl * grid.dx / grid.v_max
    nsteps = max(1, math.ceil(t_f / dt))
    while nsteps > 1 and (nsteps - 1) * dt >= t_f:
        nsteps -= 1
    dt_last = t_f - (nsteps - 1) * dt
    if isinstance(grid, RoadGrid):
        rho = grid.rho
        for k in range(nsteps):
            h = dt if k < nsteps - 1 else dt_last
            ext = np.concatenate(([0.0], rho, [0.0]))
            flux = godunov_flux(ext[:-1], ext[1:], grid.v_max)
            rho = rho - (h / grid.dx) * (flux[1:] - flux[:-1])
            if rho.min() < -1e-12 or rho.max() > 1.0 + 1e-12:
                raise RuntimeError(f"cell density left [0, 1] at step {k}")
        return RoadGrid(grid.a, grid.b, grid.dx, grid.v_max, rho)
    if isinstance(grid, NetworkGrid):
        etas = list(grid.eta)
        for k in range(nsteps):
            h = dt if k < nsteps - 1 else dt_last
            etas = _step_network_arrays(etas, grid, h)
            low = min(e.min() for e in etas)
            if low < -1e-12:
                raise RuntimeError(f"path density turned negative at step {k}")
        return NetworkGrid(grid.net, grid.paths, grid.dx, grid.v_max, tuple(etas), grid.slots, grid.slot_groups, grid.n_slots)
    raise TypeError(f"cannot simulate {type(grid).__name__}")
