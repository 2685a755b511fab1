"""Scratch: exercise the pipeline on tiny instances (deleted before finish)."""
import numpy as np

from bikeflow import (
    CostModel, DemandTensor, Instance, Mode, SiteGraph, Site, Tariff, TimeGrid,
    brute_force, build_network, compute_metrics, decode_solution, formulate,
    objective_breakdown, solve_lp, solve_milp, verify_solution, lp_bound_check,
)


def tiny_instance(n_trikes=1, demand_spec=None, b0=(0, 2), price=2.0):
    graph = SiteGraph(
        sites=(Site("a"), Site("b")),
        distance_km=np.array([[0.0, 1.0], [1.0, 0.0]]),
    )
    tg = TimeGrid(start_clock_min=420, interval_minutes=5, num_intervals=3)
    counts = np.zeros((2, 2, 3), dtype=np.int64)
    spec = [(0, 1, 1, 1)] if demand_spec is None else demand_spec
    for (i, j, t, c) in spec:
        counts[i, j, t] = c
    return Instance(
        site_graph=graph,
        time_grid=tg,
        demand=DemandTensor(counts),
        initial_bikes=tuple(b0),
        trike_count=n_trikes,
        tariff=Tariff(unit_price=price, block_minutes=15),
        cost_model=CostModel(
            handling_per_bike=0.5,
            trike_km_rate=0.4,
            trike_capacity=2,
            trike_fixed_per_hour=0.0,
            bike_amortized_per_day=1.5,
        ),
    )


inst = tiny_instance()
net = build_network(inst.site_graph, inst.time_grid, inst.bike_speed_kmh, inst.trike_speed_kmh)
print("ride arcs:", net.ride_arcs)
print("reloc arcs:", net.reloc_arcs)
prob = formulate(inst, net)
print("cols:", prob.num_cols, "rows:", prob.num_rows)

lp = solve_lp(prob)
print("LP:", lp.status, lp.objective, "iters", lp.iterations)

milp = solve_milp(prob)
print("MILP:", milp.status, milp.objective, "nodes", milp.node_count, "gap", milp.gap)

res = brute_force(inst)
print("oracle:", res.objective)
# rider at site 0 period 1 wants to go to 1; bikes start at 1.
# relocating one bike 1->0 in period 0 costs 0.4*1 + 0.5 = 0.9; fare = 2.0
# => profit 1.1 expected
assert abs(milp.objective - res.objective) < 1e-6, (milp.objective, res.objective)

sol = decode_solution(prob, milp.x)
rep = verify_solution(inst, sol)
print("verify:", rep.feasible, rep.max_residual, rep.integrality_violation)
bd = objective_breakdown(prob, milp.x)
print("breakdown:", bd, "net", bd.net)
m = compute_metrics(inst, sol)
print("metrics:", m)
print("bound check:", lp_bound_check(prob))

orep = verify_solution(inst, res.solution)
print("oracle solution verify:", orep.feasible, orep.max_residual)

# cheap price: relocation should NOT pay (fare 0.5 < 0.9 cost)
inst2 = tiny_instance(price=0.5)
net2 = build_network(inst2.site_graph, inst2.time_grid, inst2.bike_speed_kmh, inst2.trike_speed_kmh)
prob2 = formulate(inst2, net2)
milp2 = solve_milp(prob2)
res2 = brute_force(inst2)
print("cheap:", milp2.objective, res2.objective)
assert abs(milp2.objective - res2.objective) < 1e-6
assert abs(milp2.objective - 0.0) < 1e-9, milp2.objective

# zero demand with 1 trike and fixed cost: objective = -P_horizon
inst3 = tiny_instance(demand_spec=[], n_trikes=1)
inst3 = inst3.with_(cost_model=CostModel(0.5, 0.4, 2, 70.0, 1.5))
prob3 = formulate(inst3, build_network(inst3.site_graph, inst3.time_grid, 12, 25))
milp3 = solve_milp(prob3)
print("zero demand obj:", milp3.objective, "expected", -inst3.fixed_cost_horizon)
assert abs(milp3.objective + inst3.fixed_cost_horizon) < 1e-9

# fixed placement at the wrong site: trike at 0 while bikes at 1.
inst4 = tiny_instance().with_(trike_placement=(1, 0))
prob4 = formulate(inst4, build_network(inst4.site_graph, inst4.time_grid, 12, 25))
milp4 = solve_milp(prob4)
res4 = brute_force(inst4)
print("fixed placement:", milp4.objective, res4.objective)
assert abs(milp4.objective - res4.objective) < 1e-6
# trike starts at 0: deadhead 0->1 arrives point 1, earliest carried bike
# lands at 0 at point 2, after the rider (period 1) has left => no deal.
assert abs(milp4.objective - 0.0) < 1e-9, milp4.objective

# docked mode equivalence with no caps binding
inst5 = tiny_instance().with_(mode=Mode.docked([None, None]))
prob5 = formulate(inst5, build_network(inst5.site_graph, inst5.time_grid, 12, 25))
milp5 = solve_milp(prob5)
print("docked inf caps:", milp5.objective)
assert abs(milp5.objective - 1.1) < 1e-9

# docked with tight caps: site 0 can hold 1 bike
inst6 = tiny_instance().with_(mode=Mode.docked([1, 2]))
prob6 = formulate(inst6, build_network(inst6.site_graph, inst6.time_grid, 12, 25))
milp6 = solve_milp(prob6)
res6 = brute_force(inst6)
print("docked tight:", milp6.objective, res6.objective)
assert abs(milp6.objective - res6.objective) < 1e-6

print("ALL SMOKE CHECKS PASSED")
