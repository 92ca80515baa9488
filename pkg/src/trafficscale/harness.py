"""Matched microscopic / macroscopic experiment pairs and gap sweeps.

A Scenario bundles everything two comparison runs share: the support space
(an interval or a network), the two runs' piecewise constant initial
densities with per-run speed limits, the horizon t_f and the numerical
knobs (n list, dx, Wasserstein order p).  For a given vehicle count n the
harness seeds both microscopic runs by equal mass discretization of the
initial densities, integrates micro and macro to t_f, and reports

    dftl  labelled vehicle distance between the two micro states,
    dlwr  Wasserstein distance between the two macro profiles,
    xi    |dftl - dlwr|, the scale gap at this n.

Density blocks may carry a shift expressed in units of the vehicle length,
which makes the initial data n-dependent; macro runs are cached keyed by
their resolved data, so n-independent scenarios simulate the macro side
once per run.  On networks the initial mass must be the same on every path
of both runs: seeding places n vehicles per path and the common vehicle
length is the per-path mass divided by n - 1.

The four built-in scenarios cover a single road pair differing by a shift
(1) or by the speed limit (2), and a merge network with bumper-to-bumper
platoons whose order swap washes out as n grows (3) or persists (4).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .macro import NetworkGrid, RoadGrid, simulate_macro
from .metrics import dftl_network, dftl_road, dlwr, w_micro
from .micro import MicroNetworkState, MicroParams, MicroRoadState, simulate_micro
from .network import RoadNetwork, build_network, enumerate_paths
from .scaling import PiecewiseDensity, discretize, vehicle_length

DEFAULT_N_LIST = (25, 50, 100, 200, 400)
DEFAULT_DX = 0.05
DEFAULT_COARSEN = 2000
DT_POLICY = "dt=min(0.01,ell_n/(4*v_max)); macro dt=0.5*dx/v_max"


def _is_multiple(length: float, dx: float) -> bool:
    cells = round(length / dx)
    return cells >= 0 and abs(cells * dx - length) <= 1e-9 * max(1.0, abs(length))


@dataclass(frozen=True)
class DensityBlock:
    """One constant block of initial density on [lo, hi] (path coordinates).

    shift_in_ell_n displaces the block by that many vehicle lengths, so the
    resolved interval is [lo + s*ell_n, hi + s*ell_n] and depends on n.
    """

    lo: float
    hi: float
    value: float
    shift_in_ell_n: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "shift_in_ell_n", float(self.shift_in_ell_n))
        if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError(f"block needs lo < hi, got [{self.lo}, {self.hi}]")
        if not (np.isfinite(self.value) and 0.0 <= self.value <= 1.0):
            raise ValueError(f"block value must lie in [0, 1], got {self.value}")
        if not np.isfinite(self.shift_in_ell_n):
            raise ValueError("shift_in_ell_n must be finite")

    @property
    def mass(self) -> float:
        return (self.hi - self.lo) * self.value

    def resolved(self, ell: float) -> tuple:
        delta = self.shift_in_ell_n * ell
        return (self.lo + delta, self.hi + delta, self.value)


def _as_blocks(spec) -> tuple:
    blocks = tuple(b if isinstance(b, DensityBlock) else DensityBlock(*b) for b in spec)
    if not blocks:
        raise ValueError("a density needs at least one block")
    return blocks


@dataclass(frozen=True)
class RunSpec:
    """One run of a comparison: a speed limit and one density per path."""

    v_max: float
    densities: tuple

    def __post_init__(self):
        object.__setattr__(self, "v_max", float(self.v_max))
        if not (np.isfinite(self.v_max) and self.v_max > 0.0):
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        object.__setattr__(self, "densities", tuple(_as_blocks(d) for d in self.densities))
        if not self.densities:
            raise ValueError("a run needs at least one path density")

    def path_mass(self, index: int) -> float:
        return sum(b.mass for b in self.densities[index])

    def resolved_density(self, index: int, ell: float) -> PiecewiseDensity:
        return PiecewiseDensity.from_blocks([b.resolved(ell) for b in self.densities[index]])


@dataclass(frozen=True)
class Scenario:
    """A comparison experiment: two runs on a shared support space."""

    flat: RunSpec
    sharp: RunSpec
    t_f: float
    interval: tuple | None = None
    net: RoadNetwork | None = None
    p: float = 1
    n_list: tuple = DEFAULT_N_LIST
    dx: float = DEFAULT_DX
    boundary: str = "dirichlet0"
    name: str = field(default="scenario", compare=False)

    def __post_init__(self):
        if (self.interval is None) == (self.net is None):
            raise ValueError("exactly one of interval and net must be given")
        object.__setattr__(self, "t_f", float(self.t_f))
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if not (np.isfinite(self.t_f) and self.t_f >= 0.0):
            raise ValueError(f"t_f must be nonnegative, got {self.t_f}")
        if not (np.isfinite(self.dx) and self.dx > 0.0):
            raise ValueError(f"dx must be positive, got {self.dx}")
        if self.p < 1:
            raise ValueError(f"order p must be at least 1, got {self.p}")
        if not self.n_list or any(n < 2 for n in self.n_list):
            raise ValueError("n_list must be nonempty with every entry >= 2")
        if self.boundary != "dirichlet0":
            raise ValueError(f"unsupported boundary condition {self.boundary!r}")
        if self.interval is not None:
            self._validate_road()
        else:
            self._validate_network()

    def _ells(self) -> list:
        mass = self.seed_mass
        return [vehicle_length(mass, n) for n in self.n_list]

    def _validate_blocks(self, run: RunSpec, index: int, lo: float, hi: float) -> None:
        for block in run.densities[index]:
            for ell in self._ells():
                b_lo, b_hi, _ = block.resolved(ell)
                if b_lo < lo - 1e-9 or b_hi > hi + 1e-9:
                    raise ValueError(
                        f"block [{b_lo}, {b_hi}] leaves the support [{lo}, {hi}] at some n"
                    )

    def _validate_road(self) -> None:
        a, b = (float(x) for x in self.interval)
        object.__setattr__(self, "interval", (a, b))
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise ValueError(f"interval needs a < b, got [{a}, {b}]")
        if not _is_multiple(b - a, self.dx):
            raise ValueError(f"dx = {self.dx} does not divide the interval length {b - a}")
        for run in (self.flat, self.sharp):
            if len(run.densities) != 1:
                raise ValueError("road scenarios carry exactly one density per run")
        if abs(self.flat.path_mass(0) - self.sharp.path_mass(0)) > 1e-9 * self.seed_mass:
            raise ValueError(
                f"mass mismatch between runs: {self.flat.path_mass(0)} vs {self.sharp.path_mass(0)}"
            )
        for run in (self.flat, self.sharp):
            self._validate_blocks(run, 0, a, b)

    def _validate_network(self) -> None:
        paths = self.paths
        for arc in self.net.arcs:
            if not _is_multiple(arc.length, self.dx):
                raise ValueError(f"dx = {self.dx} does not divide the length of arc {arc.id!r}")
        for run in (self.flat, self.sharp):
            if len(run.densities) != len(paths):
                raise ValueError(
                    f"run carries {len(run.densities)} densities but the network has {len(paths)} paths"
                )
            if not _is_multiple(run.v_max * self.t_f, self.dx):
                raise ValueError(
                    f"dx = {self.dx} does not divide the extension span v_max*t_f = {run.v_max * self.t_f}"
                )
        masses = [run.path_mass(i) for run in (self.flat, self.sharp) for i in range(len(paths))]
        if max(masses) - min(masses) > 1e-9 * max(masses):
            raise ValueError(f"per-path mass mismatch across runs and paths: {masses}")
        for run in (self.flat, self.sharp):
            for path in paths:
                self._validate_blocks(run, path.index, 0.0, path.length)

    @property
    def is_network(self) -> bool:
        return self.net is not None

    @property
    def paths(self) -> tuple:
        return enumerate_paths(self.net) if self.is_network else ()

    @property
    def seed_mass(self) -> float:
        """Mass discretized per population: per-path mass on networks."""
        return self.flat.path_mass(0)

    def run(self, which: str) -> RunSpec:
        if which not in ("flat", "sharp"):
            raise ValueError(f"run must be 'flat' or 'sharp', got {which!r}")
        return self.flat if which == "flat" else self.sharp


@dataclass(frozen=True)
class SweepRow:
    """One sweep line: the two distances and their gap at a vehicle count."""

    n: int
    ell_n: float
    dftl: float
    dlwr: float
    xi: float
    wmicro: float | None = None


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    scenario_name: str
    dx: float
    p: float
    dt_policy: str
    runtime: float


def _run_key(scenario: Scenario, run: RunSpec, ell: float) -> tuple:
    data = tuple(
        tuple(b.resolved(ell) for b in run.densities[i]) for i in range(len(run.densities))
    )
    return (run.v_max, data)


def _micro_final(scenario: Scenario, run: RunSpec, n: int, ell: float):
    params = MicroParams(run.v_max, ell)
    if scenario.is_network:
        paths = scenario.paths
        populations = tuple(
            discretize(run.resolved_density(path.index, ell), n) for path in paths
        )
        state = MicroNetworkState(populations, paths, params)
    else:
        state = MicroRoadState(discretize(run.resolved_density(0, ell), n), params)
    return simulate_micro(state, scenario.t_f)


def _macro_final(scenario: Scenario, run: RunSpec, ell: float, cache: dict):
    key = _run_key(scenario, run, ell)
    if key not in cache:
        if scenario.is_network:
            paths = scenario.paths
            densities = [run.resolved_density(path.index, ell) for path in paths]
            grid = NetworkGrid.from_path_densities(
                scenario.net,
                paths,
                densities,
                scenario.dx,
                run.v_max,
                run.v_max * scenario.t_f + scenario.dx,
            )
        else:
            a, b = scenario.interval
            grid = RoadGrid.from_density(
                run.resolved_density(0, ell), a, b, scenario.dx, run.v_max
            )
        cache[key] = simulate_macro(grid, scenario.t_f)
    return cache[key]


def _sweep_row(scenario: Scenario, n: int, coarsen_to: int, cache: dict) -> SweepRow:
    ell = vehicle_length(scenario.seed_mass, n)
    micro_flat = _micro_final(scenario, scenario.flat, n, ell)
    micro_sharp = _micro_final(scenario, scenario.sharp, n, ell)
    macro_flat = _macro_final(scenario, scenario.flat, ell, cache)
    macro_sharp = _macro_final(scenario, scenario.sharp, ell, cache)
    d_macro = dlwr(macro_flat, macro_sharp, scenario.p, max_atoms=coarsen_to)
    if scenario.is_network:
        d_micro = dftl_network(scenario.net, micro_flat, micro_sharp, scenario.p)
        wm = w_micro(micro_flat, micro_sharp, scenario.p, net=scenario.net)
    else:
        d_micro = dftl_road(micro_flat, micro_sharp, scenario.p)
        wm = None
    return SweepRow(n, ell, d_micro, d_macro, abs(d_micro - d_macro), wm)


def run_pair(scenario: Scenario, n: int, coarsen_to: int = DEFAULT_COARSEN) -> tuple:
    """Distances (dftl, dlwr) of the two runs at vehicle count n."""
    if n < 2:
        raise ValueError(f"vehicle count must be at least 2, got {n}")
    row = _sweep_row(scenario, n, coarsen_to, {})
    return row.dftl, row.dlwr


def xi_sweep(scenario: Scenario, coarsen_to: int = DEFAULT_COARSEN) -> SweepResult:
    """One SweepRow per entry of the scenario's n list, in list order."""
    start = time.perf_counter()
    cache: dict = {}
    rows = tuple(_sweep_row(scenario, n, coarsen_to, cache) for n in scenario.n_list)
    return SweepResult(
        rows,
        scenario.name,
        scenario.dx,
        scenario.p,
        DT_POLICY,
        time.perf_counter() - start,
    )


def _merge_network(arm_length: float) -> RoadNetwork:
    return build_network(
        [
            ("1", "left", "junction", arm_length),
            ("2", "right", "junction", arm_length),
            ("3", "junction", "out", arm_length),
        ]
    )


def builtin_test(k: int) -> Scenario:
    """The four built-in comparison scenarios.

    1: single road, same speed, initial blocks shifted by 5.
    2: single road, same block, speed limits 1 vs 2.
    3: merge, bumper-to-bumper platoons, one shifted by half a vehicle
       length; the shift side swaps between runs (soft order swap).
    4: merge, one platoon ahead on one arm vs the other (hard order swap).
    """
    if k == 1:
        return Scenario(
            flat=RunSpec(1.0, [[(5.0, 20.0, 0.5)]]),
            sharp=RunSpec(1.0, [[(10.0, 25.0, 0.5)]]),
            t_f=20.0,
            interval=(0.0, 100.0),
            name="test1",
        )
    if k == 2:
        return Scenario(
            flat=RunSpec(1.0, [[(10.0, 25.0, 0.5)]]),
            sharp=RunSpec(2.0, [[(10.0, 25.0, 0.5)]]),
            t_f=14.0,
            interval=(0.0, 100.0),
            name="test2",
        )
    if k == 3:
        return Scenario(
            flat=RunSpec(1.0, [[(0.0, 5.0, 1.0, 0.5)], [(0.0, 5.0, 1.0)]]),
            sharp=RunSpec(1.0, [[(0.0, 5.0, 1.0)], [(0.0, 5.0, 1.0, 0.5)]]),
            t_f=50.0,
            net=_merge_network(20.0),
            name="test3",
        )
    if k == 4:
        return Scenario(
            flat=RunSpec(1.0, [[(20.0, 25.0, 1.0)], [(0.0, 5.0, 1.0)]]),
            sharp=RunSpec(1.0, [[(0.0, 5.0, 1.0)], [(20.0, 25.0, 1.0)]]),
            t_f=55.0,
            net=_merge_network(30.0),
            name="test4",
        )
    raise ValueError(f"no built-in scenario {k}, valid ids are 1..4")


def export_results(result: SweepResult, destination) -> None:
    """Write a sweep as CSV: n,ell_n,dftl,dlwr,xi and, when any row has a
    label-free micro distance, a trailing wmicro column.  Floats render in
    round-trippable full precision, so identical results give identical
    bytes."""
    with_wmicro = any(row.wmicro is not None for row in result.rows)
    lines = ["n,ell_n,dftl,dlwr,xi" + (",wmicro" if with_wmicro else "")]
    for row in result.rows:
        cells = [str(row.n), repr(row.ell_n), repr(row.dftl), repr(row.dlwr), repr(row.xi)]
        if with_wmicro:
            cells.append(repr(row.wmicro) if row.wmicro is not None else "")
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", newline="") as handle:
            handle.write(text)
