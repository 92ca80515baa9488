"""Scale bridges: densities, vehicle placement, and measure conversions."""

import numpy as np
import pytest

from trafficscale import (
    DiscreteMeasure,
    NetworkPoint,
    PiecewiseDensity,
    RoadGrid,
    antidiscretize,
    density_measure,
    discretize,
    l1_distance,
    vehicle_length,
    vehicle_measure,
)
from trafficscale.micro import MicroParams, MicroRoadState
from trafficscale.scaling import TINY_ATOM_RTOL


# ------------------------------------------------------------ vehicle_length


def test_vehicle_length_values():
    assert vehicle_length(7.5, 76) == pytest.approx(0.1, abs=1e-15)
    assert vehicle_length(1.0, 2) == 1.0
    assert vehicle_length(15.0, 151) == pytest.approx(0.1, abs=1e-15)


def test_vehicle_length_rejects_bad_input():
    with pytest.raises(ValueError, match="two vehicles"):
        vehicle_length(1.0, 1)
    with pytest.raises(ValueError, match="positive"):
        vehicle_length(0.0, 5)
    with pytest.raises(ValueError, match="positive"):
        vehicle_length(-1.0, 5)


# --------------------------------------------------------- PiecewiseDensity


def test_density_strips_zero_margins():
    rho = PiecewiseDensity(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0.0, 0.5, 0.0]))
    assert rho.support == (1.0, 2.0)
    assert rho.mass == pytest.approx(0.5)


def test_density_point_evaluation_is_right_continuous():
    rho = PiecewiseDensity(np.array([0.0, 1.0, 2.0]), np.array([0.25, 0.75]))
    assert rho.at(0.0) == 0.25
    assert rho.at(1.0) == 0.75
    assert rho.at(2.0) == 0.0
    assert rho.at(-0.5) == 0.0
    assert np.allclose(rho.at(np.array([0.5, 1.5, 5.0])), [0.25, 0.75, 0.0])


def test_density_validation():
    with pytest.raises(ValueError, match="increasing"):
        PiecewiseDensity(np.array([0.0, 0.0, 1.0]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError, match="\\[0, 1\\]"):
        PiecewiseDensity(np.array([0.0, 1.0]), np.array([1.5]))
    with pytest.raises(ValueError, match="breakpoints"):
        PiecewiseDensity(np.array([0.0, 1.0]), np.array([0.5, 0.5]))


def test_from_blocks_inserts_gaps_and_rejects_overlap():
    rho = PiecewiseDensity.from_blocks([(0.0, 1.0, 0.5), (2.0, 3.0, 0.25)])
    assert np.allclose(rho.breakpoints, [0.0, 1.0, 2.0, 3.0])
    assert np.allclose(rho.values, [0.5, 0.0, 0.25])
    assert rho.mass == pytest.approx(0.75)
    with pytest.raises(ValueError, match="overlap"):
        PiecewiseDensity.from_blocks([(0.0, 2.0, 0.5), (1.0, 3.0, 0.5)])


def test_l1_distance_exact():
    a = PiecewiseDensity.from_blocks([(0.0, 2.0, 0.5)])
    b = PiecewiseDensity.from_blocks([(1.0, 3.0, 0.5)])
    assert l1_distance(a, b) == pytest.approx(1.0, abs=1e-15)
    assert l1_distance(a, a) == 0.0


def test_shifted_density():
    rho = PiecewiseDensity.from_blocks([(5.0, 20.0, 0.5)])
    moved = rho.shifted(5.0)
    assert moved.support == (10.0, 25.0)
    assert moved.mass == pytest.approx(rho.mass)


# ----------------------------------------------------------------- discretize


def test_discretize_uniform_examples():
    rho = PiecewiseDensity.from_blocks([(0.0, 1.0, 1.0)])
    assert np.allclose(discretize(rho, 3), [0.0, 0.5, 1.0], atol=1e-15)
    assert np.allclose(discretize(rho, 2), [0.0, 1.0], atol=1e-15)
    half = PiecewiseDensity.from_blocks([(0.0, 2.0, 0.5)])
    assert np.allclose(discretize(half, 3), [0.0, 1.0, 2.0], atol=1e-15)


def test_discretize_anchors_the_support_ends():
    rho = PiecewiseDensity.from_blocks([(5.0, 20.0, 0.5)])
    for n in (2, 7, 25):
        y = discretize(rho, n)
        assert y[0] == pytest.approx(5.0, abs=1e-12)
        assert y[-1] == 20.0
        assert y.size == n


def test_discretize_packs_one_vehicle_of_mass_per_gap():
    rho = PiecewiseDensity.from_blocks([(2.0, 9.0, 0.7), (9.0, 26.0, 0.25)])
    n = 23
    ell = vehicle_length(rho.mass, n)
    y = discretize(rho, n)
    cum = np.concatenate(([0.0], np.cumsum(rho.values * rho.widths)))
    mass_at = lambda x: np.interp(x, rho.breakpoints, cum)
    slabs = np.diff(mass_at(y))
    assert np.allclose(slabs, ell, rtol=1e-12)
    # density never exceeds one, so gaps can never be tighter than a vehicle
    assert np.all(np.diff(y) >= ell * (1.0 - 1e-12))


def test_discretize_rejects_interior_vacuum():
    rho = PiecewiseDensity.from_blocks([(0.0, 1.0, 0.5), (2.0, 3.0, 0.5)])
    with pytest.raises(ValueError, match="vanishes"):
        discretize(rho, 5)


# ------------------------------------------------------------- antidiscretize


def test_antidiscretize_uniform_inverse():
    y = np.array([0.0, 0.5, 1.0])
    rho = antidiscretize(y, 0.5)
    assert np.allclose(rho.breakpoints, y)
    assert np.allclose(rho.values, [1.0, 1.0])
    assert rho.mass == pytest.approx(1.0)


def test_antidiscretize_mass_is_count_minus_one_lengths():
    rng = np.random.default_rng(21)
    ell = 0.3
    y = np.cumsum(rng.uniform(ell, 3.0, 17))
    rho = antidiscretize(y, ell)
    assert rho.mass == pytest.approx(16 * ell, rel=1e-12)


def test_antidiscretize_rejects_overlap():
    with pytest.raises(ValueError, match="overlap"):
        antidiscretize(np.array([0.0, 0.4, 1.0]), 0.5)
    with pytest.raises(ValueError, match="at least two"):
        antidiscretize(np.array([1.0]), 0.5)


def test_round_trip_mass_is_exact():
    rho = PiecewiseDensity.from_blocks([(2.0, 9.0, 0.7), (9.0, 26.0, 0.25)])
    for n in (5, 20, 81):
        ell = vehicle_length(rho.mass, n)
        back = antidiscretize(discretize(rho, n), ell)
        assert back.mass == pytest.approx(rho.mass, rel=1e-12)


def test_round_trip_is_exact_for_uniform_data():
    rho = PiecewiseDensity.from_blocks([(5.0, 20.0, 0.5)])
    for n in (10, 20, 40, 80):
        ell = vehicle_length(rho.mass, n)
        back = antidiscretize(discretize(rho, n), ell)
        assert l1_distance(back, rho) <= 1e-12 * rho.mass


def test_round_trip_error_decays_linearly_in_vehicle_length():
    # one interior jump: reconstruction differs from the datum only on the
    # straddling gap, whose width is at most ell / min(rho), so the error is
    # bounded by ell * jump / min(rho)
    rho = PiecewiseDensity.from_blocks([(2.0, 9.0, 0.7), (9.0, 26.0, 0.25)])
    bound = 0.45 / 0.25
    errors = []
    for n in (10, 20, 40, 80, 160):
        ell = vehicle_length(rho.mass, n)
        err = l1_distance(antidiscretize(discretize(rho, n), ell), rho)
        assert err <= bound * ell * (1.0 + 1e-9)
        errors.append(err)
    assert errors[-1] < errors[0]
    assert all(b < a for a, b in zip(errors, errors[1:]))


# ------------------------------------------------------------ vehicle_measure


def test_vehicle_measure_from_road_state():
    state = MicroRoadState(np.array([0.0, 1.0, 2.0]), MicroParams(1.0, 0.5))
    mu = vehicle_measure(state)
    assert not mu.is_network
    assert np.allclose(mu.locations, [0.0, 1.0, 2.0])
    assert np.allclose(mu.masses, 0.5)
    assert mu.total_mass == pytest.approx(1.5)


def test_vehicle_measure_from_bare_positions():
    mu = vehicle_measure(np.array([3.0, 5.0]), vehicle_len=0.25)
    assert np.allclose(mu.masses, 0.25)
    with pytest.raises(ValueError, match="vehicle_len"):
        vehicle_measure(np.array([3.0, 5.0]))


# ------------------------------------------------------------ density_measure


def test_density_measure_one_atom_per_cell():
    rho = PiecewiseDensity.from_blocks([(10.0, 25.0, 0.5)])
    grid = RoadGrid.from_density(rho, 10.0, 25.0, 5.0, 1.0)
    mu = density_measure(grid)
    assert np.allclose(mu.locations, [12.5, 17.5, 22.5])
    assert np.allclose(mu.masses, 2.5)
    assert mu.position_spread == 0.0


def test_density_measure_from_piecewise_density():
    rho = PiecewiseDensity.from_blocks([(10.0, 25.0, 0.5)])
    mu = density_measure(rho)
    assert np.allclose(mu.locations, [17.5])
    assert np.allclose(mu.masses, [7.5])


def test_density_measure_drops_empty_cells():
    grid = RoadGrid(0.0, 3.0, 1.0, 1.0, np.array([0.0, 0.5, 0.0]))
    mu = density_measure(grid)
    assert mu.size == 1
    assert mu.locations[0] == 1.5
    empty = density_measure(RoadGrid(0.0, 2.0, 1.0, 1.0, np.zeros(2)))
    assert empty.size == 0
    assert empty.total_mass == 0.0


def test_density_measure_coarsens_to_budget():
    grid = RoadGrid(0.0, 4.0, 1.0, 1.0, np.array([0.2, 0.4, 0.4, 0.2]))
    mu = density_measure(grid, max_atoms=2)
    assert mu.size == 2
    # pairwise barycenters: (0.5*0.2 + 1.5*0.4) / 0.6 and (2.5*0.4 + 3.5*0.2) / 0.6
    assert np.allclose(mu.locations, [7.0 / 6.0, 17.0 / 6.0])
    assert np.allclose(mu.masses, [0.6, 0.6])
    assert mu.position_spread == pytest.approx(1.0)


def test_density_measure_single_atom_budget():
    grid = RoadGrid(0.0, 8.0, 1.0, 1.0, np.full(8, 0.5))
    mu = density_measure(grid, max_atoms=1)
    assert mu.size == 1
    assert mu.total_mass == pytest.approx(4.0, rel=1e-12)
    assert mu.locations[0] == pytest.approx(4.0)
    with pytest.raises(ValueError, match="max_atoms"):
        density_measure(grid, max_atoms=0)


def test_density_measure_preserves_mass_at_any_budget():
    rng = np.random.default_rng(22)
    rho = rng.uniform(0.0, 1.0, 64)
    grid = RoadGrid(0.0, 64.0, 1.0, 1.0, rho)
    total = grid.mass
    for budget in (1, 2, 3, 7, 33, 64, 1000):
        mu = density_measure(grid, max_atoms=budget)
        assert mu.size <= max(budget, 1)
        assert abs(mu.total_mass - total) <= 1e-12 * total


class _StubGrid:
    """Minimal cell_atoms provider for exercising the grouped atom path."""

    def __init__(self, groups):
        self._groups = groups

    def cell_atoms(self):
        return self._groups


def test_density_measure_absorbs_numerically_dead_atoms():
    heavy = 1.0
    dead = 1e-20
    groups = [
        ("line", None, 0.0, np.array([0.0, 1.0, 2.0, 3.0]), np.array([heavy, dead, dead, heavy]))
    ]
    mu = density_measure(_StubGrid(groups))
    assert mu.size == 2
    assert mu.total_mass == pytest.approx(2.0 + 2 * dead, rel=1e-15)
    # the dead run folded forward into the next surviving atom
    assert mu.locations[1] == pytest.approx(3.0, abs=1e-18)
    assert mu.position_spread > 0.0


def test_density_measure_absorbs_trailing_dead_run():
    groups = [("line", None, 0.0, np.array([0.0, 1.0, 2.0]), np.array([1.0, 1e-20, 1e-21]))]
    mu = density_measure(_StubGrid(groups))
    assert mu.size == 1
    assert mu.total_mass == pytest.approx(1.0, rel=1e-15)


def test_density_measure_collapses_an_all_tiny_group():
    groups = [
        ("a", "x", 4.0, np.array([1.0, 3.0]), np.array([1e-20, 3e-20])),
        ("a", "y", 4.0, np.array([2.0]), np.array([5.0])),
    ]
    mu = density_measure(_StubGrid(groups))
    assert mu.size == 2
    assert mu.is_network
    tiny = mu.masses[0]
    assert tiny == pytest.approx(4e-20, rel=1e-12)
    assert mu.locations[0].offset == pytest.approx(2.5)  # mass weighted barycenter
    assert mu.position_spread >= 2.0


def test_density_measure_keeps_atoms_above_the_floor():
    masses = np.array([1.0, 2.0, 3.0])
    assert TINY_ATOM_RTOL * masses.sum() < masses.min()
    groups = [("line", None, 0.0, np.array([0.0, 1.0, 2.0]), masses)]
    mu = density_measure(_StubGrid(groups))
    assert mu.size == 3
    assert np.array_equal(mu.masses, masses)


def test_density_measure_network_atoms_carry_points():
    groups = [
        ("a", "A3", 20.0, np.array([0.5, 1.5]), np.array([1.0, 1.0])),
        ("ext", "A3", 20.0, np.array([0.5]), np.array([1.0])),
    ]
    mu = density_measure(_StubGrid(groups))
    assert mu.is_network
    assert isinstance(mu.locations[0], NetworkPoint)
    assert mu.locations[0].extension == 0.0
    assert mu.locations[2].extension == 0.5
    assert mu.locations[2].offset == 20.0


def test_discrete_measure_validation():
    with pytest.raises(ValueError, match="nonnegative"):
        DiscreteMeasure(np.array([0.0]), np.array([-1.0]))
    with pytest.raises(ValueError, match="equal length"):
        DiscreteMeasure(np.array([0.0, 1.0]), np.array([1.0]))
