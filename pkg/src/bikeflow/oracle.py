"""Independent ground truth for testing the optimization pipeline.

``brute_force`` enumerates every trike trajectory on the time-expanded
lattice and, for each, every integral bike/rider flow assignment (via a
memoized exhaustive search over per-period outflow choices), returning
the global maximum.  ``verify_solution`` re-checks any solution against
a literal transcription of the constraints, computed straight from
instance data.  Neither function consults the matrix builder or the LP
core; travel durations, fares and balances are recomputed here from
first principles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .errors import OracleSizeError
from .instance import DOCKED, Instance
from .solution import FlowSolution

MAX_SITES = 3
MAX_PERIODS = 5
MAX_TRIKES = 1
MAX_CAPACITY = 3
MAX_DEMAND_ENTRY = 2

_FEAS_TOL = 1e-7
_INT_TOL = 1e-6


def _own_periods(distance_km: float, speed_kmh: float, interval_minutes: int) -> int:
    # Deliberate re-derivation; must not share code with the network builder.
    return max(1, math.ceil(distance_km / speed_kmh * 60.0 / interval_minutes))


def _own_fare(periods: int, interval_minutes: int, unit_price: float,
              block_minutes: float) -> float:
    minutes = periods * interval_minutes
    blocks = max(1, math.ceil(minutes / block_minutes - 1e-9))
    return blocks * unit_price


@dataclass
class OracleResult:
    objective: float
    solution: FlowSolution


# One candidate outflow arc from a (site, period) node.
# kind is "d" (riders) or "bm" (carried bikes).
@dataclass(frozen=True)
class _OutArc:
    kind: str
    dest: int
    arr: int
    max_flow: int
    unit_value: float  # fare for riders, -handling for carried bikes


class _TrajectorySearch:
    """Shared per-instance data for the exhaustive search."""

    def __init__(self, instance: Instance) -> None:
        self.inst = instance
        self.n = instance.num_sites
        self.T = instance.time_grid.num_intervals
        dt = instance.time_grid.interval_minutes
        dist = instance.site_graph.distance_km
        self.tau_bike = [
            [0 if i == j else _own_periods(float(dist[i, j]), instance.bike_speed_kmh, dt)
             for j in range(self.n)]
            for i in range(self.n)
        ]
        self.tau_trike = [
            [0 if i == j else _own_periods(float(dist[i, j]), instance.trike_speed_kmh, dt)
             for j in range(self.n)]
            for i in range(self.n)
        ]
        self.fare = [
            [0.0 if i == j else _own_fare(self.tau_bike[i][j], dt,
                                          instance.tariff.unit_price,
                                          instance.tariff.block_minutes)
             for j in range(self.n)]
            for i in range(self.n)
        ]
        self.move_cost = [
            [0.0 if i == j else instance.cost_model.trike_km_rate * float(dist[i, j])
             for j in range(self.n)]
            for i in range(self.n)
        ]
        self.handling = instance.cost_model.handling_per_bike
        self.capacity = instance.cost_model.trike_capacity
        self.caps = (
            [c if c is not None else None for c in instance.mode.cap]
            if instance.mode.kind == DOCKED
            else [None] * self.n
        )
        self.docked = instance.mode.kind == DOCKED
        # Ride options per (site, period): only arcs that land inside the horizon.
        self.rides: dict[tuple[int, int], list[_OutArc]] = {}
        r = instance.demand.counts
        for i in range(self.n):
            for t in range(self.T):
                opts = []
                for j in range(self.n):
                    if i == j or r[i, j, t] == 0:
                        continue
                    arr = t + self.tau_bike[i][j]
                    if arr <= self.T:
                        opts.append(_OutArc("d", j, arr, int(r[i, j, t]), self.fare[i][j]))
                if opts:
                    self.rides[(i, t)] = opts
        # Max bikes that could ever leave a site from period t on, trike
        # moves excluded (those are added per trajectory).
        self.demand_out = np.zeros((self.n, self.T + 1), dtype=np.int64)
        for i in range(self.n):
            for t in range(self.T - 1, -1, -1):
                self.demand_out[i, t] = self.demand_out[i, t + 1] + int(r[i, :, t].sum())
        # Revenue if every servable rider were satisfied: an upper bound
        # on the flow value of any trajectory, used to prune the search.
        self.revenue_ceiling = sum(
            arc.max_flow * arc.unit_value for opts in self.rides.values() for arc in opts
        )
        self._plan_cache: dict = {}

    def trajectories(self, start: Optional[int]) -> Iterator[tuple[tuple, float]]:
        """All (arc sequence, travel cost) pairs for one trike.

        ``start=None`` enumerates every free starting site.
        """
        starts = range(self.n) if start is None else [start]
        for s in starts:
            yield from self._walk(s, 0, (), 0.0)

    def _walk(self, site: int, t: int, arcs: tuple, cost: float):
        yield arcs, cost  # stay put for the rest of the horizon
        for dep in range(t, self.T):
            for k in range(self.n):
                if k == site:
                    continue
                arr = dep + self.tau_trike[site][k]
                if arr > self.T:
                    continue
                arc = (site, k, dep, arr)
                yield from self._walk(
                    k, arr, arcs + (arc,), cost + self.move_cost[site][k]
                )

    # -- inner exhaustive bike/rider assignment -------------------------------

    def best_flows(self, move_arcs: tuple) -> tuple[float, dict]:
        """Optimal integral bike/rider flows given the trike arcs.

        Returns (value, chosen flows per state) where value excludes the
        trike travel and fixed costs.
        """
        moves_at: dict[tuple[int, int], list[_OutArc]] = {}
        extra_out = np.zeros((self.n, self.T + 1), dtype=np.int64)
        for (i, k, dep, arr) in move_arcs:
            moves_at.setdefault((i, dep), []).append(
                _OutArc("bm", k, arr, self.capacity, -self.handling)
            )
            for t in range(dep + 1):
                extra_out[i, t] += self.capacity
        memo: dict = {}
        b0 = tuple(int(v) for v in self.inst.initial_bikes)

        def clamp(stocks: tuple, t: int) -> tuple:
            if self.docked:
                return stocks
            return tuple(
                min(stocks[i], int(self.demand_out[i, t] + extra_out[i, t]))
                for i in range(self.n)
            )

        def options(i: int, t: int) -> list[_OutArc]:
            return self.rides.get((i, t), []) + moves_at.get((i, t), [])

        def site_plans(arcs: list[_OutArc], budget: int) -> Iterator[tuple[float, tuple]]:
            """Every way to load the outgoing arcs of one site."""
            if not arcs:
                yield 0.0, ()
                return
            head, tail = arcs[0], arcs[1:]
            for q in range(min(budget, head.max_flow) + 1):
                for value, rest in site_plans(tail, budget - q):
                    part = ((head, q),) if q else ()
                    yield value + q * head.unit_value, part + rest

        def search(t: int, stocks: tuple, arrivals: tuple) -> float:
            if t == self.T:
                return 0.0
            key = (t, clamp(stocks, t), arrivals)
            hit = memo.get(key)
            if hit is not None:
                return hit[0]
            best_value = -math.inf
            best_plan = None
            for value, plan, new_stocks in self._joint_plans(t, stocks, options):
                # new_stocks is the parked stock after departures, before
                # the next point's arrivals land: the quantity dock caps
                # constrain.
                if self.docked and any(
                    self.caps[i] is not None and new_stocks[i] > self.caps[i]
                    for i in range(self.n)
                ):
                    continue
                merged = list(new_stocks)
                future = []
                for (arr, dest, qty) in arrivals:
                    if arr == t + 1:
                        merged[dest] += qty
                    else:
                        future.append((arr, dest, qty))
                for site_plan in plan:
                    for arc, qty in site_plan:
                        if arc.arr == t + 1:
                            merged[arc.dest] += qty
                        else:
                            future.append((arc.arr, arc.dest, qty))
                tail_value = search(t + 1, tuple(merged), tuple(sorted(future)))
                if value + tail_value > best_value:
                    best_value = value + tail_value
                    best_plan = plan
            memo[key] = (best_value, best_plan)
            return best_value

        value = search(0, b0, ())
        return value, memo

    def _joint_plans(self, t: int, stocks: tuple, options) -> Iterator:
        """Cross product of per-site outflow plans at period t."""

        def rec(site: int, acc_value: float, acc_plan: tuple, acc_stocks: tuple):
            if site == self.n:
                yield acc_value, acc_plan, acc_stocks
                return
            arcs = options(site, t)
            if not arcs:
                yield from rec(site + 1, acc_value, acc_plan + ((),), acc_stocks)
                return
            budget = stocks[site]
            for value, plan in self._site_plans_cached(arcs, budget):
                used = sum(q for _, q in plan)
                new_stocks = acc_stocks[:site] + (stocks[site] - used,) + acc_stocks[site + 1:]
                yield from rec(site + 1, acc_value + value, acc_plan + (plan,), new_stocks)

        yield from rec(0, 0.0, (), stocks)

    def _site_plans_cached(self, arcs: list[_OutArc], budget: int):
        key = (tuple(arcs), budget)
        cached = self._plan_cache.get(key)
        if cached is not None:
            return cached
        plans = []

        def rec(k: int, remaining: int, value: float, chosen: tuple):
            if k == len(arcs):
                plans.append((value, chosen))
                return
            head = arcs[k]
            for q in range(min(remaining, head.max_flow) + 1):
                rec(
                    k + 1,
                    remaining - q,
                    value + q * head.unit_value,
                    chosen + ((head, q),) if q else chosen,
                )

        rec(0, budget, 0.0, ())
        self._plan_cache[key] = plans
        return plans


def _validate_size(instance: Instance) -> None:
    problems = []
    if instance.num_sites > MAX_SITES:
        problems.append(f"{instance.num_sites} sites > {MAX_SITES}")
    if instance.time_grid.num_intervals > MAX_PERIODS:
        problems.append(f"{instance.time_grid.num_intervals} periods > {MAX_PERIODS}")
    if instance.trike_count > MAX_TRIKES:
        problems.append(f"{instance.trike_count} trikes > {MAX_TRIKES}")
    if instance.cost_model.trike_capacity > MAX_CAPACITY:
        problems.append(
            f"trike capacity {instance.cost_model.trike_capacity} > {MAX_CAPACITY}"
        )
    if instance.demand.counts.size and instance.demand.counts.max() > MAX_DEMAND_ENTRY:
        problems.append(f"demand entry {instance.demand.counts.max()} > {MAX_DEMAND_ENTRY}")
    if problems:
        raise OracleSizeError("instance too large for the oracle: " + "; ".join(problems))


def brute_force(instance: Instance) -> OracleResult:
    """Exhaustive optimum over trike trajectories and integral bike flows.

    With integral demand, stocks and coupled capacities, the residual
    bike problem has an integral optimum, so enumerating integer flows
    is exact.  Deliberately restricted to toy sizes.
    """
    _validate_size(instance)
    search = _TrajectorySearch(instance)
    n = instance.num_sites

    if instance.trike_count == 0:
        candidates: list[tuple] = [((), 0.0)]
    else:
        if instance.trike_placement is None:
            start = None
        else:
            start = next(i for i in range(n) if instance.trike_placement[i] == 1)
        candidates = list(search.trajectories(start))

    best_total = -math.inf
    best_traj: Optional[tuple] = None
    for arcs, travel_cost in candidates:
        # No trajectory can beat the all-demand-served revenue ceiling,
        # so expensive tours are skipped without losing exactness.
        if search.revenue_ceiling - travel_cost <= best_total:
            continue
        value, _ = search.best_flows(arcs)
        total = value - travel_cost
        if total > best_total:
            best_total = total
            best_traj = (arcs, travel_cost)

    objective = best_total - instance.trike_count * instance.fixed_cost_horizon
    solution = _reconstruct(instance, search, best_traj[0])
    return OracleResult(objective=objective, solution=solution)


def _reconstruct(instance: Instance, search: _TrajectorySearch,
                 move_arcs: tuple) -> FlowSolution:
    """Replay the memoized optimal plan into a full FlowSolution."""
    n, T = search.n, search.T
    _, memo = search.best_flows(move_arcs)

    moves_at: dict[tuple[int, int], list[_OutArc]] = {}
    for (i, k, dep, arr) in move_arcs:
        moves_at.setdefault((i, dep), []).append(
            _OutArc("bm", k, arr, search.capacity, -search.handling)
        )

    extra_out = np.zeros((n, T + 1), dtype=np.int64)
    for (i, k, dep, arr) in move_arcs:
        for t in range(dep + 1):
            extra_out[i, t] += search.capacity

    def clamp(stocks: tuple, t: int) -> tuple:
        if search.docked:
            return stocks
        return tuple(
            min(stocks[i], int(search.demand_out[i, t] + extra_out[i, t]))
            for i in range(n)
        )

    # Stocks follow the balance convention b[t+1] = b[t] - out(t) + in(t):
    # the parked count excludes same-point arrivals, which only join the
    # next point's stock (or hand over to a same-point departure).
    bike = np.zeros((n, T + 1))
    rider_flow: dict = {}
    bike_move: dict = {}
    bike[:, 0] = instance.initial_bikes
    stocks = tuple(int(v) for v in instance.initial_bikes)  # available at t
    arrivals: tuple = ()
    for t in range(T):
        plan = memo[(t, clamp(stocks, t), arrivals)][1]
        assert plan is not None, "optimal path hit a pruned state"
        after_out = list(stocks)
        future = []
        for site in range(n):
            for arc, qty in plan[site]:
                after_out[site] -= qty
                key = (site, arc.dest, t, arc.arr)
                if arc.kind == "d":
                    rider_flow[key] = rider_flow.get(key, 0.0) + qty
                else:
                    bike_move[key] = bike_move.get(key, 0.0) + qty
                future.append((arc.arr, arc.dest, qty))
        bike[:, t + 1] = after_out
        merged = list(after_out)
        for (arr, dest, qty) in arrivals:
            future.append((arr, dest, qty))
        still_future = []
        for (arr, dest, qty) in future:
            if arr == t + 1:
                merged[dest] += qty
            else:
                still_future.append((arr, dest, qty))
        stocks = tuple(merged)
        arrivals = tuple(sorted(still_future))

    trike = np.zeros((n, T + 1))
    trike_move: dict = {}
    if instance.trike_count == 1:
        if move_arcs:
            pos = move_arcs[0][0]
        elif instance.trike_placement is not None:
            pos = next(i for i in range(n) if instance.trike_placement[i] == 1)
        else:
            pos = _best_free_start(instance, search)
        t = 0
        for (i, k, dep, arr) in move_arcs:
            trike[pos, t:dep + 1] = 1.0
            trike_move[(i, k, dep, arr)] = 1.0
            # After arriving at point arr the trike is parked from arr+1 on.
            pos, t = k, arr + 1
        trike[pos, t:] = 1.0
    return FlowSolution(
        bike_stock=bike,
        trike_stock=trike,
        rider_flow=rider_flow,
        bike_move=bike_move,
        trike_move=trike_move,
    )


def _best_free_start(instance: Instance, search: _TrajectorySearch) -> int:
    # Idle trike under free placement: site 0 by convention.
    return 0


# ---------------------------------------------------------------------------
# Verifier
# ---------------------------------------------------------------------------

@dataclass
class VerificationReport:
    feasible: bool
    residuals: dict[str, float]
    integrality_violation: float
    messages: list[str] = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0


def verify_solution(
    instance: Instance,
    solution: FlowSolution,
    feas_tol: float = _FEAS_TOL,
    int_tol: float = _INT_TOL,
) -> VerificationReport:
    """Check a solution against the constraints, straight from instance data.

    Balances, coupling, demand bounds, dock caps, signs and integrality
    are all recomputed here; the matrix builder is never consulted.
    Infeasibility is a report outcome, not an exception.
    """
    n = instance.num_sites
    T = instance.time_grid.num_intervals
    if solution.num_sites != n or solution.num_points != T + 1:
        raise ValueError("solution dimensions do not match the instance")
    dt = instance.time_grid.interval_minutes
    dist = instance.site_graph.distance_km
    messages: list[str] = []

    def tau(i: int, j: int, speed: float) -> int:
        return _own_periods(float(dist[i, j]), speed, dt)

    def arc_ok(key, speed: float) -> bool:
        i, j, dep, arr = key
        if not (0 <= i < n and 0 <= j < n) or i == j:
            return False
        if not (0 <= dep < arr <= T):
            return False
        return arr - dep == tau(i, j, speed)

    residuals = {
        "bike_balance": 0.0,
        "trike_balance": 0.0,
        "capacity_coupling": 0.0,
        "demand_bound": 0.0,
        "dock_cap": 0.0,
        "nonnegativity": 0.0,
        "boundary": 0.0,
        "trike_total": 0.0,
        "arc_validity": 0.0,
    }

    for key, value in solution.rider_flow.items():
        if abs(value) > feas_tol and not arc_ok(key, instance.bike_speed_kmh):
            residuals["arc_validity"] = max(residuals["arc_validity"], abs(value))
            messages.append(f"rider flow on invalid arc {key}")
    for family, speed in (("bike_move", instance.trike_speed_kmh),
                          ("trike_move", instance.trike_speed_kmh)):
        for key, value in getattr(solution, family).items():
            if abs(value) > feas_tol and not arc_ok(key, speed):
                residuals["arc_validity"] = max(residuals["arc_validity"], abs(value))
                messages.append(f"{family} on invalid arc {key}")

    out_b = np.zeros((n, T + 1))
    in_b = np.zeros((n, T + 1))
    for flows in (solution.rider_flow, solution.bike_move):
        for (i, j, dep, arr), value in flows.items():
            if 0 <= i < n and 0 <= dep <= T:
                out_b[i, dep] += value
            if 0 <= j < n and 0 <= arr <= T:
                in_b[j, arr] += value
    out_u = np.zeros((n, T + 1))
    in_u = np.zeros((n, T + 1))
    for (i, j, dep, arr), value in solution.trike_move.items():
        if 0 <= i < n and 0 <= dep <= T:
            out_u[i, dep] += value
        if 0 <= j < n and 0 <= arr <= T:
            in_u[j, arr] += value

    b = solution.bike_stock
    u = solution.trike_stock
    for i in range(n):
        for t in range(T):
            res = abs(b[i, t + 1] - (b[i, t] - out_b[i, t] + in_b[i, t]))
            residuals["bike_balance"] = max(residuals["bike_balance"], res)
            res = abs(u[i, t + 1] - (u[i, t] - out_u[i, t] + in_u[i, t]))
            residuals["trike_balance"] = max(residuals["trike_balance"], res)

    capacity = instance.cost_model.trike_capacity
    arc_keys = set(solution.bike_move) | set(solution.trike_move)
    for key in arc_keys:
        bm = solution.bike_move.get(key, 0.0)
        w = solution.trike_move.get(key, 0.0)
        residuals["capacity_coupling"] = max(
            residuals["capacity_coupling"], bm - capacity * w
        )

    r = instance.demand.counts
    for (i, j, dep, arr), value in solution.rider_flow.items():
        limit = float(r[i, j, dep]) if 0 <= i < n and 0 <= j < n and 0 <= dep < T else 0.0
        residuals["demand_bound"] = max(residuals["demand_bound"], value - limit)

    if instance.mode.kind == DOCKED:
        for i, cap in enumerate(instance.mode.cap):
            if cap is not None:
                residuals["dock_cap"] = max(residuals["dock_cap"], float(b[i].max()) - cap)

    low = min(
        float(b.min()) if b.size else 0.0,
        float(u.min()) if u.size else 0.0,
        min((v for v in solution.rider_flow.values()), default=0.0),
        min((v for v in solution.bike_move.values()), default=0.0),
        min((v for v in solution.trike_move.values()), default=0.0),
    )
    residuals["nonnegativity"] = max(0.0, -low)

    for i in range(n):
        residuals["boundary"] = max(
            residuals["boundary"], abs(b[i, 0] - instance.initial_bikes[i])
        )
    if instance.trike_placement is not None:
        for i in range(n):
            residuals["boundary"] = max(
                residuals["boundary"], abs(u[i, 0] - instance.trike_placement[i])
            )
    total0 = float(u[:, 0].sum()) if n else 0.0
    residuals["trike_total"] = abs(total0 - instance.trike_count)

    int_violation = 0.0
    for value in solution.trike_move.values():
        int_violation = max(int_violation, abs(value - round(value)))
    if u.size:
        int_violation = max(int_violation, float(np.max(np.abs(u - np.round(u)))))

    worst = max(residuals.values()) if residuals else 0.0
    feasible = worst <= feas_tol and int_violation <= int_tol
    for family, res in residuals.items():
        if res > feas_tol:
            messages.append(f"{family} violated by {res:.3g}")
    if int_violation > int_tol:
        messages.append(f"integrality violated by {int_violation:.3g}")
    return VerificationReport(
        feasible=feasible,
        residuals=residuals,
        integrality_violation=int_violation,
        messages=messages,
    )
