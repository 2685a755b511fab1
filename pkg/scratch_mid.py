"""Scratch: branching pressure + mid-size timing (deleted before finish)."""
import random
import time

import numpy as np

from bikeflow import (
    CostModel, DemandTensor, Instance, Mode, SiteGraph, Site, Tariff, TimeGrid,
    brute_force, build_network, decode_solution, formulate, solve_milp,
    verify_solution, SolveLimits,
)
from scratch_stress import random_tiny_instance


def fractional_tiny(seed: int) -> Instance:
    """Tuned so partial trike loads make the LP fractional."""
    rng = random.Random(10_000 + seed)
    n = rng.randint(2, 3)
    T = rng.randint(3, 5)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                dist[i, j] = round(rng.uniform(0.4, 1.5), 3)
    counts = np.zeros((n, n, T), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for t in range(T):
                if rng.random() < 0.5:
                    counts[i, j, t] = rng.randint(1, 2)
    b0 = [0] * n
    b0[rng.randrange(n)] = rng.randint(2, 4)
    return Instance(
        site_graph=SiteGraph(
            sites=tuple(Site(f"s{i}") for i in range(n)), distance_km=dist
        ),
        time_grid=TimeGrid(start_clock_min=420, interval_minutes=5, num_intervals=T),
        demand=DemandTensor(counts),
        initial_bikes=tuple(b0),
        trike_count=1,
        tariff=Tariff(unit_price=1.0, block_minutes=15),
        cost_model=CostModel(
            handling_per_bike=0.3,
            trike_km_rate=0.6,         # high km rate => fractional w tempting
            trike_capacity=3,
            trike_fixed_per_hour=0.0,
            bike_amortized_per_day=1.5,
        ),
    )


branched = 0
t0 = time.monotonic()
for seed in range(40):
    inst = fractional_tiny(seed)
    net = build_network(inst.site_graph, inst.time_grid,
                        inst.bike_speed_kmh, inst.trike_speed_kmh)
    prob = formulate(inst, net)
    milp = solve_milp(prob)
    res = brute_force(inst)
    diff = abs(milp.objective - res.objective)
    assert diff <= 1e-6, (seed, milp.objective, res.objective)
    sol = decode_solution(prob, milp.x)
    assert verify_solution(inst, sol).feasible, seed
    if milp.node_count > 1:
        branched += 1
print(f"fractional batch OK in {time.monotonic()-t0:.1f}s; "
      f"{branched}/40 needed branching")

# mid-size: 5 sites, T=8, 2 trikes - the monotonicity test shape
rng = random.Random(7)
n, T = 5, 8
dist = np.zeros((n, n))
for i in range(n):
    for j in range(n):
        if i != j:
            dist[i, j] = round(rng.uniform(0.3, 1.2), 3)
dist = np.round((dist + dist.T) / 2, 3)
counts = np.zeros((n, n, T), dtype=np.int64)
for i in range(n):
    for j in range(n):
        if i == j:
            continue
        for t in range(T):
            if rng.random() < 0.4:
                counts[i, j, t] = rng.randint(1, 4)
b0 = (12, 0, 3, 0, 5)
base = Instance(
    site_graph=SiteGraph(sites=tuple(Site(f"s{i}") for i in range(n)), distance_km=dist),
    time_grid=TimeGrid(start_clock_min=420, interval_minutes=5, num_intervals=T),
    demand=DemandTensor(counts),
    initial_bikes=b0,
    trike_count=2,
    tariff=Tariff(unit_price=1.0, block_minutes=15),
    cost_model=CostModel(0.5, 0.4, 5, 10.0, 1.5),
)
for trikes in (0, 1, 2, 3):
    inst = base.with_(trike_count=trikes)
    net = build_network(inst.site_graph, inst.time_grid,
                        inst.bike_speed_kmh, inst.trike_speed_kmh)
    prob = formulate(inst, net)
    t1 = time.monotonic()
    milp = solve_milp(prob)
    dt = time.monotonic() - t1
    sol = decode_solution(prob, milp.x)
    rep = verify_solution(inst, sol)
    print(f"trikes={trikes}: obj={milp.objective:+.3f} nodes={milp.node_count} "
          f"cols={prob.num_cols} rows={prob.num_rows} {dt:.2f}s verify={rep.feasible}")
