"""Reported quantities of a solved scenario.

Revenue here is the optimization objective (fleet fixed cost included);
bike purchase amortization is applied after the fact, mirroring how the
per-bike capital cost stays out of the operational objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .instance import Instance, fare
from .oracle import verify_solution
from .solution import FlowSolution
from .timespace import travel_periods


@dataclass(frozen=True)
class ScenarioMetrics:
    revenue: float                        # objective value, fixed cost included
    revenue_excluding_fixed: float
    profit_after_bike_amortization: float
    satisfaction_level: float             # met / total demand, in [0, 1]
    total_demand: int
    met_demand: float
    relocation_bike_count: float
    trike_distance_km: float


def compute_metrics(
    instance: Instance,
    solution: FlowSolution,
    check_feasible: bool = True,
) -> ScenarioMetrics:
    """Aggregate revenue, satisfaction and relocation effort from flows.

    Zero total demand counts as fully satisfied (there was nobody to
    disappoint).  Infeasible solutions are rejected when checking is on.
    """
    if check_feasible:
        report = verify_solution(instance, solution)
        if not report.feasible:
            raise InvalidInputError(
                "refusing to compute metrics for an infeasible solution: "
                + "; ".join(report.messages[:3])
            )
    dt = instance.time_grid.interval_minutes
    dist = instance.site_graph.distance_km

    ride_revenue = 0.0
    for (i, j, _, _), value in solution.rider_flow.items():
        minutes = travel_periods(float(dist[i, j]), instance.bike_speed_kmh, dt) * dt
        ride_revenue += fare(minutes, instance.tariff) * value
    handling_cost = instance.cost_model.handling_per_bike * sum(
        solution.bike_move.values()
    )
    travel_cost = sum(
        instance.cost_model.trike_km_rate * float(dist[i, j]) * value
        for (i, j, _, _), value in solution.trike_move.items()
    )
    fixed_cost = instance.trike_count * instance.fixed_cost_horizon
    revenue_excluding_fixed = ride_revenue - handling_cost - travel_cost

    total_demand = instance.demand.total()
    met_demand = solution.total_met_demand()
    satisfaction = 1.0 if total_demand == 0 else met_demand / total_demand

    amortization = (
        instance.total_bikes
        * instance.cost_model.bike_amortized_per_day
        * (instance.time_grid.horizon_hours / 24.0)
    )
    revenue = revenue_excluding_fixed - fixed_cost
    return ScenarioMetrics(
        revenue=revenue,
        revenue_excluding_fixed=revenue_excluding_fixed,
        profit_after_bike_amortization=revenue - amortization,
        satisfaction_level=min(1.0, max(0.0, satisfaction)),
        total_demand=total_demand,
        met_demand=met_demand,
        relocation_bike_count=solution.total_relocated_bikes(),
        trike_distance_km=sum(
            float(dist[i, j]) * value
            for (i, j, _, _), value in solution.trike_move.items()
        ),
    )


def unused_bike_ratio(instance: Instance, solution: FlowSolution) -> np.ndarray:
    """Per-site fraction of initially parked bikes that never moved.

    Bikes are anonymous, so the count is the conservative
    max(0, initial - total outflow) per site; sites that started empty
    report 1.0 (vacuously unused).
    """
    n = instance.num_sites
    outflow = np.zeros(n)
    for flows in (solution.rider_flow, solution.bike_move):
        for (i, _, _, _), value in flows.items():
            if 0 <= i < n:
                outflow[i] += value
    ratios = np.ones(n)
    for i in range(n):
        b0 = instance.initial_bikes[i]
        if b0 > 0:
            ratios[i] = max(0.0, b0 - outflow[i]) / b0
    return ratios


METRICS_COLUMNS = (
    "revenue_cents",
    "revenue_excluding_fixed_cents",
    "profit_after_bike_amortization_cents",
    "satisfaction_level",
    "total_demand",
    "met_demand",
    "relocation_bike_count",
    "trike_distance_km",
)


def metrics_record(metrics: ScenarioMetrics) -> list[str]:
    """One flat delimiter-ready record, currency as integer cents."""
    return [
        str(_to_cents(metrics.revenue)),
        str(_to_cents(metrics.revenue_excluding_fixed)),
        str(_to_cents(metrics.profit_after_bike_amortization)),
        f"{metrics.satisfaction_level:.6f}",
        str(metrics.total_demand),
        f"{metrics.met_demand:.6f}",
        f"{metrics.relocation_bike_count:.6f}",
        f"{metrics.trike_distance_km:.6f}",
    ]


def _to_cents(amount: float) -> int:
    if math.isnan(amount):
        raise InvalidInputError("cannot serialize NaN currency")
    return int(round(amount * 100))
