"""Shared instance builders for the test suite."""

from __future__ import annotations

import random

import numpy as np

from bikeflow import (
    CostModel,
    DemandTensor,
    Instance,
    Mode,
    Site,
    SiteGraph,
    Tariff,
    TimeGrid,
)


def make_instance(
    *,
    distances,
    num_intervals,
    demand_spec=(),
    initial_bikes,
    trike_count=0,
    trike_placement=None,
    unit_price=1.0,
    block_minutes=15,
    handling=0.5,
    km_rate=0.4,
    capacity=20,
    fixed_per_hour=0.0,
    amortized_per_day=1.5,
    bike_speed=12.0,
    trike_speed=25.0,
    interval_minutes=5,
    mode=None,
) -> Instance:
    dist = np.asarray(distances, dtype=float)
    n = dist.shape[0]
    counts = np.zeros((n, n, num_intervals), dtype=np.int64)
    for i, j, t, c in demand_spec:
        counts[i, j, t] = c
    return Instance(
        site_graph=SiteGraph(
            sites=tuple(Site(f"s{i}") for i in range(n)), distance_km=dist
        ),
        time_grid=TimeGrid(
            start_clock_min=420,
            interval_minutes=interval_minutes,
            num_intervals=num_intervals,
        ),
        demand=DemandTensor(counts),
        initial_bikes=tuple(initial_bikes),
        trike_count=trike_count,
        trike_placement=trike_placement,
        tariff=Tariff(unit_price=unit_price, block_minutes=block_minutes),
        cost_model=CostModel(
            handling_per_bike=handling,
            trike_km_rate=km_rate,
            trike_capacity=capacity,
            trike_fixed_per_hour=fixed_per_hour,
            bike_amortized_per_day=amortized_per_day,
        ),
        bike_speed_kmh=bike_speed,
        trike_speed_kmh=trike_speed,
        mode=mode if mode is not None else Mode.dockless(),
    )


def two_site_relocation(price=2.0, fixed_per_hour=0.0) -> Instance:
    """One rider at site 0 (period 1), all bikes at site 1, one trike.

    Relocating a bike 1 -> 0 in period 0 costs 0.4 * 1 km + 0.5 handling;
    whether it pays depends on the fare.
    """
    return make_instance(
        distances=[[0.0, 1.0], [1.0, 0.0]],
        num_intervals=3,
        demand_spec=[(0, 1, 1, 1)],
        initial_bikes=(0, 2),
        trike_count=1,
        unit_price=price,
        capacity=2,
        fixed_per_hour=fixed_per_hour,
    )


def random_tiny_instance(seed: int) -> Instance:
    """Inside the oracle's size bounds; mixes placements and densities."""
    rng = random.Random(seed)
    n = rng.randint(1, 3)
    T = rng.randint(2, 5)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                dist[i, j] = round(rng.uniform(0.3, 2.5), 3)
    if rng.random() < 0.7:
        dist = np.round((dist + dist.T) / 2, 3)
    demand = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for t in range(T):
                if rng.random() < 0.35:
                    demand.append((i, j, t, rng.randint(1, 2)))
    trikes = rng.randint(0, 1)
    placement = None
    if trikes == 1 and rng.random() < 0.3:
        placement = [0] * n
        placement[rng.randrange(n)] = 1
        placement = tuple(placement)
    return make_instance(
        distances=dist,
        num_intervals=T,
        demand_spec=demand,
        initial_bikes=tuple(rng.randint(0, 3) for _ in range(n)),
        trike_count=trikes,
        trike_placement=placement,
        unit_price=rng.choice([0.5, 1.0, 1.5, 2.0]),
        block_minutes=rng.choice([10, 15]),
        handling=rng.choice([0.1, 0.3, 0.5, 0.8]),
        km_rate=rng.choice([0.2, 0.4, 0.6]),
        capacity=rng.randint(1, 3),
        fixed_per_hour=rng.choice([0.0, 2.0, 5.0]),
    )


def fractional_tiny_instance(seed: int) -> Instance:
    """Tuned so partial trike loads leave the LP relaxation fractional."""
    rng = random.Random(10_000 + seed)
    n = rng.randint(2, 3)
    T = rng.randint(3, 5)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                dist[i, j] = round(rng.uniform(0.4, 1.5), 3)
    demand = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for t in range(T):
                if rng.random() < 0.5:
                    demand.append((i, j, t, rng.randint(1, 2)))
    b0 = [0] * n
    b0[rng.randrange(n)] = rng.randint(2, 4)
    return make_instance(
        distances=dist,
        num_intervals=T,
        demand_spec=demand,
        initial_bikes=tuple(b0),
        trike_count=1,
        handling=0.3,
        km_rate=0.6,
        capacity=3,
    )


def line_instance(
    initial_bikes=(30, 0, 0, 0, 0),
    trike_count=2,
    fixed_per_hour=12.0,
    num_intervals=6,
) -> Instance:
    """Five sites on a 0.4 km line; bikes pool at one end, riders at the rest.

    Demand comes in capacity-sized waves so extra trikes add value until
    the fleet saturates.
    """
    n = 5
    dist = np.array([[0.4 * abs(i - j) for j in range(n)] for i in range(n)])
    demand = []
    for k in range(1, n):
        for t in range(1, 5):
            demand.append((k, k - 1, t, 5))
    return make_instance(
        distances=dist,
        num_intervals=num_intervals,
        demand_spec=demand,
        initial_bikes=initial_bikes,
        trike_count=trike_count,
        capacity=5,
        handling=0.2,
        km_rate=0.4,
        fixed_per_hour=fixed_per_hour,
    )


def dock_study_instance() -> Instance:
    """Six sites with a concentrated pool, shaped for the capacity sweep."""
    n = 6
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                dist[i, j] = 0.3 * abs(i - j) + 0.1
    demand = []
    for k in range(1, n):
        for t in range(1, 4):
            demand.append((k, 0, t, 2))
        demand.append((0, k, 2, 1))
    return make_instance(
        distances=dist,
        num_intervals=5,
        demand_spec=demand,
        initial_bikes=(12, 1, 0, 2, 0, 1),
        trike_count=2,
        capacity=4,
        handling=0.2,
        km_rate=0.3,
        fixed_per_hour=6.0,
    )
