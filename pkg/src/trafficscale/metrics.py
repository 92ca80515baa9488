"""Distances between traffic states across the two modelling scales.

All comparisons reduce to distances between measures of equal total mass:

* ``dftl_road`` / ``dftl_network`` pair vehicles by label and average the
  paired displacement, which on a network means shortest path length.
* ``w_micro`` is the Wasserstein distance between the atom measures carried
  by the vehicles, with no labels: on the line the sorted rearrangement is
  optimal, on a network it takes a transportation solve.
* ``dlwr`` is the Wasserstein distance between cell atom measures of two
  density profiles.  At p = 1 on a single road it integrates the exact
  difference of the cumulative distributions instead of atomizing.

Every function raises ValueError when the two states do not carry the same
total mass (within 1e-9 of it), because Wasserstein distances require
balanced marginals.
"""

from __future__ import annotations

import numpy as np

from .macro import NetworkGrid, RoadGrid
from .micro import MicroNetworkState, MicroRoadState
from .network import RoadNetwork, network_distance_matrix, network_distances_paired, point_at
from .scaling import DiscreteMeasure, PiecewiseDensity, density_measure, vehicle_measure
from .transport import TransportProblem, solve_transport

MASS_RTOL = 1e-9


def _check_equal_mass(first: float, second: float) -> None:
    if abs(first - second) > MASS_RTOL * max(abs(first), abs(second), 1e-300):
        raise ValueError(f"total masses differ: {first} vs {second}")


def _sorted_atoms(measure: DiscreteMeasure) -> tuple:
    locs = np.asarray(measure.locations, dtype=float)
    order = np.argsort(locs, kind="stable")
    return locs[order], measure.masses[order]


def _cdf_at(obj, xs_plus: np.ndarray, xs_minus: np.ndarray) -> tuple:
    """Cumulative mass just right of xs_plus and just left of xs_minus."""
    if isinstance(obj, PiecewiseDensity):
        bp = obj.breakpoints
        cum = np.concatenate(([0.0], np.cumsum(obj.values * obj.widths)))
        return np.interp(xs_plus, bp, cum), np.interp(xs_minus, bp, cum)
    locs, masses = _sorted_atoms(obj)
    cum = np.concatenate(([0.0], np.cumsum(masses)))
    right = cum[np.searchsorted(locs, xs_plus, side="right")]
    left = cum[np.searchsorted(locs, xs_minus, side="left")]
    return right, left


def _breaks_of(obj) -> np.ndarray:
    if isinstance(obj, PiecewiseDensity):
        return obj.breakpoints
    locs = np.asarray(obj.locations, dtype=float)
    return np.unique(locs)


def w1_cdf_distance(first, second) -> float:
    """Exact 1-Wasserstein distance on the line via the cumulative functions.

    Accepts piecewise constant densities or atomic line measures in either
    slot.  The difference of the two cumulatives is piecewise linear on the
    merged breakpoint grid, so each interval integrates in closed form,
    splitting at the root when the sign flips.
    """
    if isinstance(first, DiscreteMeasure) and first.is_network:
        raise ValueError("w1_cdf_distance is for line measures only")
    if isinstance(second, DiscreteMeasure) and second.is_network:
        raise ValueError("w1_cdf_distance is for line measures only")
    mass_a = first.total_mass if isinstance(first, DiscreteMeasure) else first.mass
    mass_b = second.total_mass if isinstance(second, DiscreteMeasure) else second.mass
    _check_equal_mass(mass_a, mass_b)
    xs = np.union1d(_breaks_of(first), _breaks_of(second))
    if xs.size < 2:
        return 0.0
    starts, ends = xs[:-1], xs[1:]
    fa_start, fa_end = _cdf_at(first, starts, ends)
    fb_start, fb_end = _cdf_at(second, starts, ends)
    ga = fa_start - fb_start
    gb = fa_end - fb_end
    h = ends - starts
    span = np.abs(ga) + np.abs(gb)
    crossing = ga * gb < 0.0
    trapezoid = 0.5 * h * span
    split = np.where(crossing, h * (ga * ga + gb * gb) / np.where(span > 0.0, 2.0 * span, 1.0), 0.0)
    return float(np.sum(np.where(crossing, split, trapezoid)))


def wasserstein_line(first: DiscreteMeasure, second: DiscreteMeasure, p: float = 1) -> float:
    """p-Wasserstein distance between atomic line measures.

    The optimal coupling on the line is monotone, so mass slabs between
    consecutive cut points of the merged cumulative grids pair up in order.
    """
    if first.is_network or second.is_network:
        raise ValueError("wasserstein_line is for line measures only")
    if p < 1:
        raise ValueError(f"order p must be at least 1, got {p}")
    _check_equal_mass(first.total_mass, second.total_mass)
    if first.size == 0 or second.size == 0:
        return 0.0
    locs_a, mass_a = _sorted_atoms(first)
    locs_b, mass_b = _sorted_atoms(second)
    cum_a = np.cumsum(mass_a)
    cum_b = np.cumsum(mass_b)
    cuts = np.union1d(cum_a, cum_b)
    slabs = np.diff(np.concatenate(([0.0], cuts)))
    keep = slabs > 0.0
    slabs = slabs[keep]
    mids = cuts[keep] - 0.5 * slabs
    idx_a = np.minimum(np.searchsorted(cum_a, mids, side="left"), locs_a.size - 1)
    idx_b = np.minimum(np.searchsorted(cum_b, mids, side="left"), locs_b.size - 1)
    gaps = np.abs(locs_a[idx_a] - locs_b[idx_b])
    return float(np.dot(slabs, gaps**p) ** (1.0 / p))


def _downstream_order(net: RoadNetwork, measure: DiscreteMeasure) -> tuple:
    """Atoms sorted by driving-direction progress (then arc, then offset).

    The order does not change the optimal value; it makes the solver's
    northwest corner start follow the geometry, which keeps pivots few."""
    depth = net.downstream_depth
    points = measure.locations
    keys = np.array([depth[net.arc(q.arc).tail] + q.offset + q.extension for q in points])
    rank = {aid: i for i, aid in enumerate(sorted({q.arc for q in points}))}
    arcs = np.array([rank[q.arc] for q in points])
    offs = np.array([q.offset + q.extension for q in points])
    order = np.lexsort((offs, arcs, keys))
    return tuple(points[i] for i in order), measure.masses[order]


def wasserstein_network(
    net: RoadNetwork, first: DiscreteMeasure, second: DiscreteMeasure, p: float = 1
) -> float:
    """p-Wasserstein distance between atomic network measures, by solving
    the transportation problem with shortest path costs."""
    if not (first.is_network and second.is_network):
        raise ValueError("wasserstein_network needs two network measures")
    if p < 1:
        raise ValueError(f"order p must be at least 1, got {p}")
    _check_equal_mass(first.total_mass, second.total_mass)
    if first.size == 0 or second.size == 0:
        return 0.0
    locs_a, mass_a = _downstream_order(net, first)
    locs_b, mass_b = _downstream_order(net, second)
    costs = network_distance_matrix(net, locs_a, locs_b) ** p
    plan = solve_transport(TransportProblem(mass_a, mass_b, costs))
    return float(plan.objective ** (1.0 / p))


def _check_same_layout(first, second) -> None:
    if abs(first.params.vehicle_len - second.params.vehicle_len) > 1e-12 * first.params.vehicle_len:
        raise ValueError("states carry different vehicle lengths")


def dftl_road(first: MicroRoadState, second: MicroRoadState, p: float = 1) -> float:
    """Labelled microscopic distance on a single road.

    Vehicle i of one state pairs with vehicle i of the other; the distance
    is the vehicle length times the p-mean of the paired displacements.
    """
    if p < 1:
        raise ValueError(f"order p must be at least 1, got {p}")
    _check_same_layout(first, second)
    if first.positions.size != second.positions.size:
        raise ValueError("states must carry the same number of vehicles")
    ell = first.params.vehicle_len
    gaps = np.abs(first.positions - second.positions)
    return float((ell * np.sum(gaps**p)) ** (1.0 / p))


def dftl_network(
    net: RoadNetwork, first: MicroNetworkState, second: MicroNetworkState, p: float = 1
) -> float:
    """Labelled microscopic distance on a network, pairing vehicle i of
    population alpha with its twin and measuring shortest path lengths."""
    if p < 1:
        raise ValueError(f"order p must be at least 1, got {p}")
    _check_same_layout(first, second)
    if len(first.populations) != len(second.populations):
        raise ValueError("states must carry the same populations")
    points_a = []
    points_b = []
    for pop_a, pop_b, path_a, path_b in zip(
        first.populations, second.populations, first.paths, second.paths
    ):
        if path_a.arc_ids != path_b.arc_ids:
            raise ValueError("paired populations must follow the same path")
        if pop_a.size != pop_b.size:
            raise ValueError("paired populations must have the same size")
        points_a.extend(point_at(path_a, y) for y in pop_a)
        points_b.extend(point_at(path_b, y) for y in pop_b)
    if not points_a:
        return 0.0
    ell = first.params.vehicle_len
    gaps = network_distances_paired(net, points_a, points_b)
    return float((ell * np.sum(gaps**p)) ** (1.0 / p))


def w_micro(first, second, p: float = 1, net: RoadNetwork | None = None) -> float:
    """Label-free microscopic distance: Wasserstein between vehicle measures."""
    measure_a = vehicle_measure(first)
    measure_b = vehicle_measure(second)
    if measure_a.is_network != measure_b.is_network:
        raise ValueError("cannot compare a road state with a network state")
    if measure_a.is_network:
        if net is None:
            raise ValueError("network states need the net argument for distances")
        return wasserstein_network(net, measure_a, measure_b, p)
    return wasserstein_line(measure_a, measure_b, p)


def dlwr_with_bound(first, second, p: float = 1, max_atoms: int = 2000) -> tuple:
    """Macroscopic distance plus a bound on its atomization error.

    On a single road with p = 1 the atoms are bypassed entirely and the
    distance is the exact integral of the cumulative difference, so the bound
    is zero.  Every other route works on cell atom measures whose coarsening
    moves mass by at most the merged span; the triangle inequality turns that
    into the returned bound M^(1/p) * (span_first + span_second).
    """
    if p < 1:
        raise ValueError(f"order p must be at least 1, got {p}")
    if isinstance(first, RoadGrid) and isinstance(second, RoadGrid):
        if p == 1:
            return w1_cdf_distance(first.to_density(), second.to_density()), 0.0
        mu_a = density_measure(first, max_atoms)
        mu_b = density_measure(second, max_atoms)
        value = wasserstein_line(mu_a, mu_b, p)
    elif isinstance(first, NetworkGrid) and isinstance(second, NetworkGrid):
        ids_a = tuple(arc.id for arc in first.net.arcs)
        ids_b = tuple(arc.id for arc in second.net.arcs)
        if ids_a != ids_b:
            raise ValueError("grids live on different networks")
        mu_a = density_measure(first, max_atoms)
        mu_b = density_measure(second, max_atoms)
        value = wasserstein_network(first.net, mu_a, mu_b, p)
    else:
        raise ValueError("dlwr compares two road grids or two network grids")
    spread = mu_a.position_spread + mu_b.position_spread
    bound = mu_a.total_mass ** (1.0 / p) * spread
    return value, bound


def dlwr(first, second, p: float = 1, max_atoms: int = 2000) -> float:
    """Macroscopic distance: Wasserstein between cell atom measures.

    See dlwr_with_bound for the companion atomization error bound.
    """
    return dlwr_with_bound(first, second, p, max_atoms)[0]
