"""Scratch: randomized solver-vs-oracle stress (deleted before finish)."""
import random
import time

import numpy as np

from bikeflow import (
    CostModel, DemandTensor, Instance, Mode, SiteGraph, Site, Tariff, TimeGrid,
    brute_force, build_network, decode_solution, formulate, solve_lp, solve_milp,
    verify_solution,
)


def random_tiny_instance(seed: int) -> Instance:
    rng = random.Random(seed)
    n = rng.randint(1, 3)
    T = rng.randint(2, 5)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                dist[i, j] = round(rng.uniform(0.3, 2.5), 3)
    if rng.random() < 0.7:
        dist = np.round((dist + dist.T) / 2, 3)  # usually symmetric
    counts = np.zeros((n, n, T), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for t in range(T):
                if rng.random() < 0.35:
                    counts[i, j, t] = rng.randint(1, 2)
    trikes = rng.randint(0, 1)
    placement = None
    if trikes == 1 and rng.random() < 0.3:
        placement = [0] * n
        placement[rng.randrange(n)] = 1
        placement = tuple(placement)
    b0 = tuple(rng.randint(0, 3) for _ in range(n))
    return Instance(
        site_graph=SiteGraph(
            sites=tuple(Site(f"s{i}") for i in range(n)), distance_km=dist
        ),
        time_grid=TimeGrid(start_clock_min=420, interval_minutes=5, num_intervals=T),
        demand=DemandTensor(counts),
        initial_bikes=b0,
        trike_count=trikes,
        trike_placement=placement,
        tariff=Tariff(
            unit_price=rng.choice([0.5, 1.0, 1.5, 2.0]),
            block_minutes=rng.choice([10, 15]),
        ),
        cost_model=CostModel(
            handling_per_bike=rng.choice([0.1, 0.3, 0.5, 0.8]),
            trike_km_rate=rng.choice([0.2, 0.4, 0.6]),
            trike_capacity=rng.randint(1, 3),
            trike_fixed_per_hour=rng.choice([0.0, 2.0, 5.0]),
            bike_amortized_per_day=1.5,
        ),
    )


def main(count=60):
    t0 = time.monotonic()
    worst = 0.0
    node_total = 0
    for seed in range(count):
        inst = random_tiny_instance(seed)
        net = build_network(inst.site_graph, inst.time_grid,
                            inst.bike_speed_kmh, inst.trike_speed_kmh)
        prob = formulate(inst, net)
        t_milp = time.monotonic()
        milp = solve_milp(prob)
        t_milp = time.monotonic() - t_milp
        t_oracle = time.monotonic()
        res = brute_force(inst)
        t_oracle = time.monotonic() - t_oracle
        lp = solve_lp(prob)
        diff = abs(milp.objective - res.objective)
        worst = max(worst, diff)
        node_total += milp.node_count
        ok = diff <= 1e-6
        sol = decode_solution(prob, milp.x)
        rep = verify_solution(inst, sol)
        orep = verify_solution(inst, res.solution)
        dom = lp.objective >= milp.objective - 1e-6
        if not (ok and rep.feasible and orep.feasible and dom):
            print(f"seed {seed}: MISMATCH milp={milp.objective!r} oracle={res.objective!r} "
                  f"verify={rep.feasible} overify={orep.feasible} dom={dom}")
            print("  sites", inst.num_sites, "T", inst.time_grid.num_intervals,
                  "trikes", inst.trike_count, "a", inst.cost_model.trike_capacity)
            return 1
        if seed % 10 == 0:
            print(f"seed {seed}: obj={milp.objective:+.4f} nodes={milp.node_count} "
                  f"milp={t_milp*1000:.0f}ms oracle={t_oracle*1000:.0f}ms")
    dt = time.monotonic() - t0
    print(f"OK: {count} instances in {dt:.1f}s, worst diff {worst:.2e}, "
          f"total nodes {node_total}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
