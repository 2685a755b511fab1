"""One-factor-at-a-time sensitivity sweeps and the dock-capacity study.

Every sweep pins all parameters to a declared default set, then varies a
single axis.  Scenario solves are independent and deterministic, so a
worker pool may run them concurrently; results are merged by scenario
index and do not depend on the worker count.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import BikeflowError, InfeasibleInstanceError, InvalidInputError
from .instance import DemandTensor, Instance, Mode, scale_fleet
from .metrics import METRICS_COLUMNS, ScenarioMetrics, compute_metrics, metrics_record
from .milp import derived_integrality_gap, decode_solution, formulate
from .oracle import verify_solution
from .solution import FlowSolution
from .solver import MilpStatus, SolveLimits, solve_milp
from .timespace import build_network

logger = logging.getLogger("bikeflow.sweep")

TRIKE_COUNT = "trike_count"
BIKE_COUNT = "bike_count"
HANDLING_COST = "handling_cost"
PRICE = "price"
DOCK_CAP = "dock_cap"
AXES = (TRIKE_COUNT, BIKE_COUNT, HANDLING_COST, PRICE, DOCK_CAP)


@dataclass(frozen=True)
class SensitivityDefaults:
    """Parameter values held fixed while one axis varies."""

    trike_count: int = 2
    bike_count: int = 899
    handling_cost: float = 0.5
    price: float = 1.0

    @staticmethod
    def from_instance(instance: Instance) -> "SensitivityDefaults":
        return SensitivityDefaults(
            trike_count=instance.trike_count,
            bike_count=instance.total_bikes,
            handling_cost=instance.cost_model.handling_per_bike,
            price=instance.tariff.unit_price,
        )


@dataclass(frozen=True)
class ScenarioGrid:
    axis: str
    values: tuple
    defaults: SensitivityDefaults = SensitivityDefaults()

    def __post_init__(self) -> None:
        if self.axis not in AXES:
            raise InvalidInputError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise InvalidInputError("a sweep needs at least one value")


@dataclass(frozen=True)
class DemandResponse:
    """Piecewise-linear demand multiplier as a function of price."""

    prices: tuple[float, ...]
    factors: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.prices) != len(self.factors) or not self.prices:
            raise InvalidInputError("response table needs matching nonempty columns")
        if any(b <= a for a, b in zip(self.prices, self.prices[1:])):
            raise InvalidInputError("response prices must be strictly increasing")
        if any(not 0.0 <= f <= 1.0 for f in self.factors):
            raise InvalidInputError("response factors must lie in [0, 1]")
        if any(b > a for a, b in zip(self.factors, self.factors[1:])):
            raise InvalidInputError("response factors must be non-increasing in price")

    @staticmethod
    def identity() -> "DemandResponse":
        return DemandResponse(prices=(0.0,), factors=(1.0,))

    def factor_at(self, price: float) -> float:
        if price <= self.prices[0]:
            if price < self.prices[0]:
                logger.warning("price %s below response table; clamping", price)
            return self.factors[0]
        if price >= self.prices[-1]:
            if price > self.prices[-1]:
                logger.warning("price %s above response table; clamping", price)
            return self.factors[-1]
        k = max(i for i, p in enumerate(self.prices) if p <= price)
        p0, p1 = self.prices[k], self.prices[k + 1]
        f0, f1 = self.factors[k], self.factors[k + 1]
        return f0 + (f1 - f0) * (price - p0) / (p1 - p0)


def apply_demand_response(
    demand: DemandTensor, price: float, response: DemandResponse
) -> DemandTensor:
    """Scale every demand entry by the response factor, rounding half to even."""
    factor = response.factor_at(price)
    if factor == 1.0:
        return demand
    scaled = np.vectorize(lambda v: round(v * factor))(demand.counts.astype(float))
    return DemandTensor(scaled.astype(np.int64))


@dataclass
class ScenarioResult:
    axis: str
    value: float
    status: str
    gap: float
    node_count: int
    objective: Optional[float]
    metrics: Optional[ScenarioMetrics]
    solution: Optional[FlowSolution] = None


def _pin_defaults(
    base: Instance, defaults: SensitivityDefaults, response: DemandResponse
) -> Instance:
    return base.with_(
        trike_count=defaults.trike_count,
        trike_placement=None,
        initial_bikes=tuple(scale_fleet(base.initial_bikes, defaults.bike_count)),
        cost_model=replace(base.cost_model, handling_per_bike=defaults.handling_cost),
        tariff=replace(base.tariff, unit_price=defaults.price),
        demand=apply_demand_response(base.demand, defaults.price, response),
    )


def _derive(
    pinned: Instance,
    base: Instance,
    axis: str,
    value,
    response: DemandResponse,
) -> Instance:
    if axis == TRIKE_COUNT:
        return pinned.with_(trike_count=int(value), trike_placement=None)
    if axis == BIKE_COUNT:
        return pinned.with_(initial_bikes=tuple(scale_fleet(base.initial_bikes, int(value))))
    if axis == HANDLING_COST:
        return pinned.with_(
            cost_model=replace(pinned.cost_model, handling_per_bike=float(value))
        )
    if axis == PRICE:
        return pinned.with_(
            tariff=replace(pinned.tariff, unit_price=float(value)),
            demand=apply_demand_response(base.demand, float(value), response),
        )
    if axis == DOCK_CAP:
        return pinned.with_(mode=Mode.docked_uniform(int(value), pinned.num_sites))
    raise InvalidInputError(f"unknown axis {axis!r}")


_AXIS_FIELDS = {
    TRIKE_COUNT: {"trike_count", "trike_placement"},
    BIKE_COUNT: {"initial_bikes"},
    HANDLING_COST: {"cost_model"},
    PRICE: {"tariff", "demand"},
    DOCK_CAP: {"mode"},
}


def _assert_one_factor(pinned: Instance, derived: Instance, axis: str) -> None:
    """Structural guard: only the axis-owned fields may differ from defaults."""
    allowed = _AXIS_FIELDS[axis]
    for name in (
        "site_graph", "time_grid", "demand", "initial_bikes", "trike_count",
        "trike_placement", "tariff", "cost_model", "bike_speed_kmh",
        "trike_speed_kmh", "mode",
    ):
        a, b = getattr(pinned, name), getattr(derived, name)
        if name == "demand":
            same = np.array_equal(a.counts, b.counts)
        elif name == "initial_bikes":
            same = tuple(a) == tuple(b)
        else:
            same = a == b
        if not same and name not in allowed:
            raise BikeflowError(
                f"sweep scenario changed {name!r}, outside the {axis!r} axis"
            )


def _solve_scenario(
    instance: Instance,
    axis: str,
    value,
    limits: SolveLimits,
    keep_solution: bool,
) -> ScenarioResult:
    try:
        network = build_network(
            instance.site_graph, instance.time_grid,
            instance.bike_speed_kmh, instance.trike_speed_kmh,
        )
        problem = formulate(instance, network)
    except InfeasibleInstanceError:
        return ScenarioResult(axis, value, "infeasible", math.nan, 0, None, None)
    result = solve_milp(problem, limits)
    if result.x is None:
        return ScenarioResult(
            axis, value, result.status.value, result.gap, result.node_count, None, None
        )
    if derived_integrality_gap(problem, result.x) > 1e-6:
        raise BikeflowError("trike stocks drifted from integrality")
    solution = decode_solution(problem, result.x)
    report = verify_solution(instance, solution)
    if not report.feasible:
        raise BikeflowError(
            "solver returned an infeasible incumbent: " + "; ".join(report.messages[:3])
        )
    metrics = compute_metrics(instance, solution, check_feasible=False)
    return ScenarioResult(
        axis,
        value,
        result.status.value,
        result.gap,
        result.node_count,
        result.objective,
        metrics,
        solution if keep_solution else None,
    )


def run_sweep(
    base_instance: Instance,
    grid: ScenarioGrid,
    limits: Optional[SolveLimits] = None,
    response: Optional[DemandResponse] = None,
    max_workers: int = 1,
    keep_solutions: bool = False,
) -> list[ScenarioResult]:
    """Solve, verify and measure one scenario per grid value, in grid order.

    Scenarios hitting solver limits are recorded with their gap, never
    dropped.
    """
    limits = limits or SolveLimits()
    response = response or DemandResponse.identity()
    pinned = _pin_defaults(base_instance, grid.defaults, response)

    instances: list[Optional[Instance]] = []
    for value in grid.values:
        try:
            derived = _derive(pinned, base_instance, grid.axis, value, response)
        except InfeasibleInstanceError:
            instances.append(None)
            continue
        _assert_one_factor(pinned, derived, grid.axis)
        instances.append(derived)

    def work(k: int) -> ScenarioResult:
        if instances[k] is None:
            return ScenarioResult(
                grid.axis, grid.values[k], "infeasible", math.nan, 0, None, None
            )
        return _solve_scenario(
            instances[k], grid.axis, grid.values[k], limits, keep_solutions
        )

    if max_workers <= 1:
        return [work(k) for k in range(len(instances))]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(work, range(len(instances))))


# ---------------------------------------------------------------------------
# Dockless vs docked comparison
# ---------------------------------------------------------------------------

@dataclass
class DockPoint:
    cap: int
    status: str
    revenue: Optional[float]


@dataclass
class DockComparison:
    points: list[DockPoint]
    dockless_revenue: float
    convergence_cap: Optional[int]  # smallest cap matching dockless revenue


def compare_dock(
    base_instance: Instance,
    caps: Sequence[int],
    downscale: int,
    limits: Optional[SolveLimits] = None,
) -> DockComparison:
    """Docked revenue per capacity against the dockless reference.

    Initial stocks are first truncated to ``downscale`` bikes per site so
    moderate capacities are feasible at all; the same truncated fleet is
    used for the dockless reference.
    """
    if list(caps) != sorted(caps):
        raise InvalidInputError("caps must be ascending")
    if downscale < 1:
        raise InvalidInputError("downscale must be at least 1")
    limits = limits or SolveLimits()
    scaled = tuple(min(int(v), downscale) for v in base_instance.initial_bikes)
    dockless = base_instance.with_(initial_bikes=scaled, mode=Mode.dockless())

    ref = _solve_scenario(dockless, DOCK_CAP, math.inf, limits, keep_solution=False)
    if ref.objective is None:
        raise BikeflowError(f"dockless reference did not solve: {ref.status}")

    points: list[DockPoint] = []
    convergence: Optional[int] = None
    for cap in caps:
        try:
            docked = dockless.with_(
                mode=Mode.docked_uniform(int(cap), dockless.num_sites)
            )
        except InfeasibleInstanceError:
            points.append(DockPoint(int(cap), "infeasible", None))
            continue
        res = _solve_scenario(docked, DOCK_CAP, cap, limits, keep_solution=False)
        points.append(DockPoint(int(cap), res.status, res.objective))
        if (
            convergence is None
            and res.objective is not None
            and abs(res.objective - ref.objective) <= 1e-6
        ):
            convergence = int(cap)
    return DockComparison(
        points=points,
        dockless_revenue=ref.objective,
        convergence_cap=convergence,
    )


# ---------------------------------------------------------------------------
# Flat-file results
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = (
    "run_id",
    "axis",
    "value",
    "status",
    "gap",
    "node_count",
    "objective_cents",
) + METRICS_COLUMNS


def write_results(
    results: Sequence[ScenarioResult], path: str | Path, run_id: str
) -> None:
    """Append scenario records to a delimiter-separated file.

    The header is written once; later runs append rows keyed by run id.
    """
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(SWEEP_COLUMNS)
        for res in results:
            row = [
                run_id,
                res.axis,
                f"{res.value:g}" if isinstance(res.value, float) else str(res.value),
                res.status,
                "" if math.isnan(res.gap) else f"{res.gap:.6g}",
                str(res.node_count),
                "" if res.objective is None else str(int(round(res.objective * 100))),
            ]
            if res.metrics is None:
                row.extend([""] * len(METRICS_COLUMNS))
            else:
                row.extend(metrics_record(res.metrics))
            writer.writerow(row)
