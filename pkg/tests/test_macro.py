"""Finite volume solvers: fluxes, single-road stepping, shared-cell networks."""

import numpy as np
import pytest

from trafficscale import (
    CFL_MAX,
    NetworkGrid,
    PiecewiseDensity,
    RoadGrid,
    build_network,
    enumerate_paths,
    extended_velocity,
    godunov_flux,
    simulate_macro,
    step_network_multipath,
    step_road_godunov,
    total_density,
)


@pytest.fixture(scope="module")
def merge():
    return build_network(
        [
            ("A1", "left", "junction", 20.0),
            ("A2", "right", "junction", 20.0),
            ("A3", "junction", "out", 20.0),
        ]
    )


# ----------------------------------------------------------------- velocities


def test_extended_velocity_values():
    assert extended_velocity(0.0, 2.0) == 2.0
    assert extended_velocity(0.5, 2.0) == 1.0
    assert extended_velocity(1.0, 2.0) == 0.0
    assert extended_velocity(1.2, 2.0) == 0.0
    assert np.allclose(extended_velocity(np.array([0.0, 1.2]), 1.0), [1.0, 0.0])


def test_godunov_flux_examples():
    assert godunov_flux(0.2, 0.8, 1.0) == pytest.approx(0.16, abs=1e-15)
    assert godunov_flux(1.0, 0.0, 1.0) == pytest.approx(0.25, abs=1e-15)
    assert godunov_flux(0.0, 0.0, 1.0) == 0.0
    # vectorized form agrees with scalars
    got = godunov_flux(np.array([0.2, 1.0]), np.array([0.8, 0.0]), 1.0)
    assert np.allclose(got, [0.16, 0.25])


def test_godunov_flux_is_consistent():
    u = np.linspace(0.0, 1.0, 21)
    got = godunov_flux(u, u, 1.5)
    assert np.allclose(got, 1.5 * u * (1.0 - u), atol=1e-15)


def test_godunov_flux_scales_with_speed_limit():
    assert godunov_flux(0.2, 0.8, 3.0) == pytest.approx(3.0 * 0.16)


# ------------------------------------------------------------------- RoadGrid


def test_from_density_exact_cell_averages():
    rho = PiecewiseDensity.from_blocks([(10.0, 25.0, 0.5)])
    grid = RoadGrid.from_density(rho, 0.0, 100.0, 5.0, 1.0)
    expected = np.zeros(20)
    expected[2:5] = 0.5
    assert np.array_equal(grid.rho, expected)
    assert grid.mass == pytest.approx(7.5, rel=1e-15)


def test_from_density_partial_overlap():
    rho = PiecewiseDensity.from_blocks([(0.0, 1.5, 1.0)])
    grid = RoadGrid.from_density(rho, 0.0, 2.0, 1.0, 1.0)
    assert np.allclose(grid.rho, [1.0, 0.5])


def test_from_density_rejects_support_outside_domain():
    rho = PiecewiseDensity.from_blocks([(10.0, 25.0, 0.5)])
    with pytest.raises(ValueError, match="support"):
        RoadGrid.from_density(rho, 0.0, 20.0, 5.0, 1.0)


def test_grid_validation_messages_mention_dx():
    with pytest.raises(ValueError, match="dx"):
        RoadGrid.from_density(None, 0.0, 1.0, 0.3, 1.0)
    with pytest.raises(ValueError, match="cells"):
        RoadGrid(0.0, 2.0, 1.0, 1.0, np.zeros(3))
    with pytest.raises(ValueError, match="\\[0, 1\\]"):
        RoadGrid(0.0, 2.0, 1.0, 1.0, np.array([0.5, 1.5]))


def test_to_density_round_trip():
    grid = RoadGrid(0.0, 4.0, 1.0, 1.0, np.array([0.0, 0.5, 1.0, 0.25]))
    back = RoadGrid.from_density(grid.to_density(), 0.0, 4.0, 1.0, 1.0)
    assert np.allclose(back.rho, grid.rho, atol=1e-15)


# ------------------------------------------------------------------ road steps


def test_step_road_riemann_dam_break():
    grid = RoadGrid(0.0, 2.0, 1.0, 1.0, np.array([1.0, 0.0]))
    out = step_road_godunov(grid, 0.4)
    assert np.allclose(out.rho, [1.0 - 0.4 * 0.25, 0.4 * 0.25], atol=1e-15)
    assert out.mass == pytest.approx(grid.mass, rel=1e-15)


def test_step_road_interior_of_uniform_state_is_steady():
    grid = RoadGrid(0.0, 10.0, 1.0, 1.0, np.full(10, 0.3))
    out = step_road_godunov(grid, 0.5)
    # equal interior fluxes cancel; even the last cell sends the same flux
    # into the empty ghost as it receives, so only the first cell drains
    assert np.allclose(out.rho[1:], 0.3, atol=1e-15)
    assert out.rho[0] == pytest.approx(0.3 - 0.5 * 0.21)


def test_step_road_empty_road_stays_empty():
    grid = RoadGrid(0.0, 5.0, 1.0, 2.0, np.zeros(5))
    out = step_road_godunov(grid, 0.25)
    assert np.array_equal(out.rho, np.zeros(5))


def test_step_road_rejects_cfl_violation():
    grid = RoadGrid(0.0, 5.0, 1.0, 2.0, np.zeros(5))
    with pytest.raises(ValueError, match="CFL"):
        step_road_godunov(grid, 0.26)


def test_road_stays_in_unit_interval_and_conserves_mass():
    rng = np.random.default_rng(41)
    grid = RoadGrid(0.0, 60.0, 1.0, 1.0, np.concatenate((np.zeros(10), rng.uniform(0.0, 1.0, 20), np.zeros(30))))
    mass = grid.mass
    for _ in range(40):
        grid = step_road_godunov(grid, 0.5)
        assert grid.rho.min() >= -1e-12
        assert grid.rho.max() <= 1.0 + 1e-12
        assert abs(grid.mass - mass) <= 1e-12 * mass


def test_simulate_macro_road():
    rho = PiecewiseDensity.from_blocks([(5.0, 20.0, 0.5)])
    grid = RoadGrid.from_density(rho, 0.0, 100.0, 0.5, 1.0)
    assert simulate_macro(grid, 0.0) is grid
    out = simulate_macro(grid, 20.0)
    assert out.mass == pytest.approx(grid.mass, rel=1e-12)
    # the whole profile has moved strictly to the right
    assert out.rho[:10].sum() == pytest.approx(0.0, abs=1e-12)
    com_before = np.dot(grid.rho, np.arange(grid.cells)) / grid.rho.sum()
    com_after = np.dot(out.rho, np.arange(out.cells)) / out.rho.sum()
    assert com_after > com_before + 10.0


def test_simulate_macro_validates_arguments():
    grid = RoadGrid(0.0, 5.0, 1.0, 1.0, np.zeros(5))
    with pytest.raises(ValueError, match="final time"):
        simulate_macro(grid, -1.0)
    with pytest.raises(ValueError, match="cfl"):
        simulate_macro(grid, 1.0, cfl=0.9)
    with pytest.raises(TypeError, match="simulate"):
        simulate_macro(np.zeros(5), 1.0)


# -------------------------------------------------------------- network grids


def _grid_from_blocks(merge, blocks_per_path, dx=0.5, v_max=1.0, ext=5.0):
    paths = enumerate_paths(merge)
    densities = [
        PiecewiseDensity.from_blocks(blocks) if blocks else None
        for blocks in blocks_per_path
    ]
    return NetworkGrid.from_path_densities(merge, paths, densities, dx, v_max, ext)


def test_network_grid_shares_cells_between_paths(merge):
    grid = _grid_from_blocks(merge, [[(22.0, 24.0, 0.7)], [(22.0, 24.0, 0.5)]])
    # both blocks live on the shared outgoing arc, so totals add up
    j = int(np.where(grid.eta[0] > 0.0)[0][0])
    assert grid.eta[0][j] == pytest.approx(0.7)
    assert total_density(grid, 0, j) == pytest.approx(1.2)
    assert grid.mass == pytest.approx(2.0 * 0.7 + 2.0 * 0.5, rel=1e-12)
    assert np.allclose(grid.path_masses(), [1.4, 1.0])


def test_network_grid_unshared_cells_do_not_interact(merge):
    grid = _grid_from_blocks(merge, [[(5.0, 10.0, 0.7)], [(5.0, 10.0, 0.5)]])
    j = int(np.where(grid.eta[0] > 0.0)[0][0])
    assert total_density(grid, 0, j) == pytest.approx(0.7)


def test_network_grid_rejects_indivisible_extension(merge):
    paths = enumerate_paths(merge)
    with pytest.raises(ValueError, match="dx"):
        NetworkGrid.from_path_densities(merge, paths, [None, None], 0.5, 1.0, 5.3)


def test_network_grid_rejects_density_off_path(merge):
    paths = enumerate_paths(merge)
    rho = PiecewiseDensity.from_blocks([(39.0, 41.0, 0.5)])
    with pytest.raises(ValueError, match="support"):
        NetworkGrid.from_path_densities(merge, paths, [rho, None], 0.5, 1.0, 5.0)


def test_network_step_donor_cell_by_hand():
    net = build_network([("a", "u", "v", 3.0)])
    (path,) = enumerate_paths(net)
    rho = PiecewiseDensity(np.array([0.0, 1.0, 2.0]), np.array([0.2, 0.4]))
    grid = NetworkGrid.from_path_densities(net, (path,), [rho], 1.0, 1.0, 1.0)
    assert np.allclose(grid.eta[0], [0.2, 0.4, 0.0, 0.0])
    out = step_network_multipath(grid, 0.5)
    # donor cell flux with the receiving cell's velocity on the total density
    assert np.allclose(out.eta[0], [0.14, 0.26, 0.2, 0.0], atol=1e-15)
    assert out.mass == pytest.approx(grid.mass, rel=1e-14)


def test_network_step_jammed_shared_cell_blocks_flow(merge):
    grid = _grid_from_blocks(merge, [[(21.0, 23.0, 0.7)], [(21.0, 23.0, 0.5)]])
    assert [total_density(grid, 0, j) for j in range(42, 46)] == pytest.approx([1.2] * 4)
    out = step_network_multipath(grid, 0.25)
    # interior jam cells keep their density: the receiving cell's velocity is
    # zero in both directions, so nothing enters and nothing leaves
    assert out.eta[0][42] == grid.eta[0][42]
    assert out.eta[0][43] == grid.eta[0][43]
    assert out.eta[1][44] == grid.eta[1][44]
    # the front cell drains into the empty cell ahead of the jam
    assert out.eta[0][45] == pytest.approx(0.35, abs=1e-15)
    assert all(e.min() >= 0.0 for e in out.eta)
    assert out.mass == pytest.approx(grid.mass, rel=1e-12)


def test_network_step_rejects_cfl_violation(merge):
    grid = _grid_from_blocks(merge, [None, None])
    with pytest.raises(ValueError, match="CFL"):
        step_network_multipath(grid, 0.5 * grid.dx / grid.v_max * 1.01)


def test_network_simulation_conserves_mass_and_positivity(merge):
    grid = _grid_from_blocks(merge, [[(0.0, 5.0, 1.0)], [(0.0, 5.0, 1.0)]], ext=25.0)
    mass = grid.mass
    out = simulate_macro(grid, 20.0)
    assert out.mass == pytest.approx(mass, rel=1e-12)
    assert min(e.min() for e in out.eta) >= -1e-15
    # mass has crossed the junction onto the shared arc
    shared = slice(40, 80)
    assert out.eta[0][shared].sum() > 0.0
    assert out.eta[1][shared].sum() > 0.0


def test_network_overlapping_initial_data_exceeds_unit_density(merge):
    # independent path populations may overlap on a shared arc, so the total
    # density legally starts above one; the jam then drains from its front
    grid = _grid_from_blocks(merge, [[(20.5, 22.5, 0.8)], [(21.0, 23.0, 0.8)]])
    assert grid.slot_totals().max() == pytest.approx(1.6)
    out = simulate_macro(grid, 3.0)
    assert out.mass == pytest.approx(grid.mass, rel=1e-12)
    assert min(e.min() for e in out.eta) >= 0.0
    assert out.slot_totals().max() <= 1.6 + 1e-12
    assert out.slot_totals()[84] < 1.6  # front overlap cell has drained


def test_simulate_macro_network_time_zero(merge):
    grid = _grid_from_blocks(merge, [None, None])
    assert simulate_macro(grid, 0.0) is grid


def test_cfl_constant_is_half():
    assert CFL_MAX == 0.5
