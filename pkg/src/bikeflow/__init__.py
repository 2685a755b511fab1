"""Fleet-relocation optimization toolkit for dockless bikesharing.

Builds a discretized space-time network over parking sites, formulates
the combined bike-relocation / trike-assignment program as a sparse
mixed discrete/continuous maximization, solves it exactly with a
bounded-variable simplex inside branch and bound, and runs
one-factor-at-a-time sensitivity studies over fleet size, trike count,
costs and prices.
"""

from .errors import (
    BikeflowError,
    InfeasibleInstanceError,
    InvalidInputError,
    NumericalError,
    OracleSizeError,
    PointOutsideGridError,
)
from .instance import (
    CostModel,
    DemandTensor,
    GridSpec,
    Instance,
    Mode,
    Tariff,
    TripRecord,
    aggregate_demand,
    fare,
    grid_assign,
    initial_distribution,
    read_trips,
    scale_fleet,
)
from .metrics import ScenarioMetrics, compute_metrics, unused_bike_ratio
from .milp import (
    MilpProblem,
    ObjectiveBreakdown,
    decode_solution,
    formulate,
    objective_breakdown,
    write_lp,
)
from .oracle import OracleResult, VerificationReport, brute_force, verify_solution
from .solution import FlowSolution
from .solver import (
    LpSolution,
    LpStatus,
    MilpSolution,
    MilpStatus,
    SolveLimits,
    lp_bound_check,
    solve_lp,
    solve_milp,
)
from .sweep import (
    DemandResponse,
    ScenarioGrid,
    ScenarioResult,
    SensitivityDefaults,
    apply_demand_response,
    compare_dock,
    run_sweep,
)
from .timespace import (
    SiteGraph,
    Site,
    SpaceTimeNetwork,
    TimeGrid,
    build_network,
    centroid_distances_km,
    travel_periods,
)

__version__ = "0.1.0"
