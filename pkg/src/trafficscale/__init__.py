"""Multiscale traffic toolkit: follow-the-leader vehicle simulation, LWR
density simulation, scale bridging operators, and distances that compare
traffic states across the two scales, on a single road or a road network.
"""

from .network import (
    Arc,
    NetworkPoint,
    Path,
    RoadNetwork,
    build_network,
    enumerate_paths,
    network_distance,
    network_distance_matrix,
    network_distances_paired,
    path_coordinate,
    point_at,
)
from .scaling import (
    DiscreteMeasure,
    PiecewiseDensity,
    antidiscretize,
    density_measure,
    discretize,
    l1_distance,
    vehicle_length,
    vehicle_measure,
)
from .micro import (
    MicroNetworkState,
    MicroParams,
    MicroRoadState,
    default_dt,
    follow_velocity,
    follow_velocity_ext,
    next_vehicle,
    simulate_micro,
    step_network,
    step_road,
)
from .macro import (
    CFL_MAX,
    NetworkGrid,
    RoadGrid,
    extended_velocity,
    godunov_flux,
    simulate_macro,
    step_network_multipath,
    step_road_godunov,
    total_density,
)
from .transport import TransportPlan, TransportProblem, solve_transport
from .metrics import (
    dftl_network,
    dftl_road,
    dlwr,
    dlwr_with_bound,
    w1_cdf_distance,
    w_micro,
    wasserstein_line,
    wasserstein_network,
)
from .harness import (
    DEFAULT_COARSEN,
    DEFAULT_DX,
    DEFAULT_N_LIST,
    DensityBlock,
    RunSpec,
    Scenario,
    SweepResult,
    SweepRow,
    builtin_test,
    export_results,
    run_pair,
    xi_sweep,
)
from .cli import load_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "Arc",
    "NetworkPoint",
    "Path",
    "RoadNetwork",
    "build_network",
    "enumerate_paths",
    "network_distance",
    "network_distance_matrix",
    "network_distances_paired",
    "path_coordinate",
    "point_at",
    "DiscreteMeasure",
    "PiecewiseDensity",
    "antidiscretize",
    "density_measure",
    "discretize",
    "l1_distance",
    "vehicle_length",
    "vehicle_measure",
    "MicroNetworkState",
    "MicroParams",
    "MicroRoadState",
    "default_dt",
    "follow_velocity",
    "follow_velocity_ext",
    "next_vehicle",
    "simulate_micro",
    "step_network",
    "step_road",
    "CFL_MAX",
    "NetworkGrid",
    "RoadGrid",
    "extended_velocity",
    "godunov_flux",
    "simulate_macro",
    "step_network_multipath",
    "step_road_godunov",
    "total_density",
    "TransportPlan",
    "TransportProblem",
    "solve_transport",
    "dftl_network",
    "dftl_road",
    "dlwr",
    "dlwr_with_bound",
    "w1_cdf_distance",
    "w_micro",
    "wasserstein_line",
    "wasserstein_network",
    "DEFAULT_COARSEN",
    "DEFAULT_DX",
    "DEFAULT_N_LIST",
    "DensityBlock",
    "RunSpec",
    "Scenario",
    "SweepResult",
    "SweepRow",
    "builtin_test",
    "export_results",
    "run_pair",
    "xi_sweep",
    "load_scenario",
    "save_scenario",
    "__version__",
]
