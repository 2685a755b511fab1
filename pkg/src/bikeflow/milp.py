"""Sparse mixed discrete/continuous program for combined relocation and
trike assignment.

Variables, one column each:

* ``b`` bike stock per (site, time point), continuous
* ``u`` trike stock per (site, time point), integer only at t = 0 under
  free placement (later stocks inherit integrality through conservation)
* ``d`` riders served per ride arc, continuous, bounded by demand
* ``bm`` bikes carried per relocation arc, continuous
* ``w`` trike movements per relocation arc, integer

Constraint rows: bike balance and trike balance per (site, interval),
one capacity-coupling row per relocation arc (bm <= capacity * w), and a
single total-placement row when trikes are freely placed.  Demand bounds,
initial stocks and dock caps are column bounds, not rows.

The objective (maximization) is ride revenue minus trike travel cost and
bike handling cost; the solution-independent fleet fixed cost enters as a
constant offset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InfeasibleInstanceError, InvalidInputError
from .instance import DOCKED, Instance, fare
from .solution import FlowSolution
from .timespace import SpaceTimeNetwork, _pair_periods

BIKE_STOCK = "b"
TRIKE_STOCK = "u"
RIDER_MOVE = "d"
BIKE_MOVE = "bm"
TRIKE_MOVE = "w"


@dataclass(frozen=True)
class VariableCatalog:
    """Bijection between (kind, subscripts) and dense column indices."""

    entries: tuple[tuple, ...]
    index: dict = field(repr=False, compare=False)

    @staticmethod
    def build(entries: Sequence[tuple]) -> "VariableCatalog":
        entries = tuple(entries)
        index = {entry: col for col, entry in enumerate(entries)}
        if len(index) != len(entries):
            raise InvalidInputError("duplicate variable subscripts")
        return VariableCatalog(entries=entries, index=index)

    def col(self, *entry) -> int:
        return self.index[entry]

    def name(self, col: int) -> str:
        return "_".join(str(part) for part in self.entries[col])

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class MilpProblem:
    """Sparse maximization program with an integrality mask.

    Triplets are stored row-major in construction order; rows are either
    equalities ('E') or <= inequalities ('L').
    """

    num_sites: int
    num_points: int
    row_sense: list[str]
    rhs: np.ndarray
    tri_rows: np.ndarray
    tri_cols: np.ndarray
    tri_vals: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    obj: np.ndarray
    obj_offset: float
    integrality: np.ndarray
    catalog: VariableCatalog
    row_labels: list[tuple]

    @property
    def num_rows(self) -> int:
        return len(self.row_sense)

    @property
    def num_cols(self) -> int:
        return len(self.obj)

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.tri_vals, (self.tri_rows, self.tri_cols)),
            shape=(self.num_rows, self.num_cols),
        )

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.obj @ x) + self.obj_offset

    # -- serialization -------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "format": "bikeflow-milp",
            "version": 1,
            "num_sites": self.num_sites,
            "num_points": self.num_points,
            "row_sense": self.row_sense,
            "rhs": self.rhs.tolist(),
            "tri_rows": self.tri_rows.tolist(),
            "tri_cols": self.tri_cols.tolist(),
            "tri_vals": self.tri_vals.tolist(),
            "lb": self.lb.tolist(),
            "ub": [None if not np.isfinite(v) else v for v in self.ub],
            "obj": self.obj.tolist(),
            "obj_offset": self.obj_offset,
            "integrality": self.integrality.astype(int).tolist(),
            "columns": [list(e) for e in self.catalog.entries],
            "row_labels": [list(r) for r in self.row_labels],
        }

    @staticmethod
    def from_json_dict(doc: dict) -> "MilpProblem":
        if doc.get("format") != "bikeflow-milp":
            raise InvalidInputError("not a bikeflow problem document")
        return MilpProblem(
            num_sites=doc["num_sites"],
            num_points=doc["num_points"],
            row_sense=list(doc["row_sense"]),
            rhs=np.asarray(doc["rhs"], dtype=float),
            tri_rows=np.asarray(doc["tri_rows"], dtype=np.int64),
            tri_cols=np.asarray(doc["tri_cols"], dtype=np.int64),
            tri_vals=np.asarray(doc["tri_vals"], dtype=float),
            lb=np.asarray(doc["lb"], dtype=float),
            ub=np.asarray(
                [np.inf if v is None else v for v in doc["ub"]], dtype=float
            ),
            obj=np.asarray(doc["obj"], dtype=float),
            obj_offset=float(doc["obj_offset"]),
            integrality=np.asarray(doc["integrality"], dtype=bool),
            catalog=VariableCatalog.build([tuple(e) for e in doc["columns"]]),
            row_labels=[tuple(r) for r in doc["row_labels"]],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), sort_keys=True) + "\n", encoding="utf-8"
        )

    @staticmethod
    def load(path: str | Path) -> "MilpProblem":
        return MilpProblem.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class _Builder:
    def __init__(self) -> None:
        self.row_sense: list[str] = []
        self.rhs: list[float] = []
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.labels: list[tuple] = []

    def add_row(self, sense: str, rhs: float, terms: Sequence[tuple[int, float]],
                label: tuple) -> None:
        row = len(self.row_sense)
        self.row_sense.append(sense)
        self.rhs.append(rhs)
        self.labels.append(label)
        seen = set()
        for col, coeff in terms:
            if col in seen:
                raise InvalidInputError(f"duplicate column {col} in row {label}")
            seen.add(col)
            self.rows.append(row)
            self.cols.append(col)
            self.vals.append(coeff)


def formulate(instance: Instance, network: SpaceTimeNetwork) -> MilpProblem:
    """Translate an instance plus its space-time network into the program.

    Bike balance per (i, t):
        b[i, t+1] = b[i, t] - departures at t + arrivals at t
    so a departure at t can only draw on stock carried into t or on
    flows arriving exactly at t (a zero-dwell handover); flows arriving
    later can never fund it.  Bikes and trikes are in transit at point
    t whenever dep < t <= arr, and stationary plus in-transit totals
    are conserved at every point.  Trike balance is the same shape with
    trike movements.
    """
    n = instance.num_sites
    T = instance.time_grid.num_intervals
    if network.num_sites != n or network.num_intervals != T:
        raise InvalidInputError("network does not match the instance dimensions")
    expected_bike = _pair_periods(
        instance.site_graph, instance.bike_speed_kmh, instance.time_grid.interval_minutes
    )
    expected_trike = _pair_periods(
        instance.site_graph, instance.trike_speed_kmh, instance.time_grid.interval_minutes
    )
    if not np.array_equal(expected_bike, network.bike_periods) or not np.array_equal(
        expected_trike, network.trike_periods
    ):
        raise InvalidInputError("network travel durations disagree with the instance")
    if instance.mode.kind == DOCKED:
        for i, cap in enumerate(instance.mode.cap):
            if cap is not None and instance.initial_bikes[i] > cap:
                raise InfeasibleInstanceError(
                    f"initial bikes at site {i} exceed its dock capacity"
                )

    entries: list[tuple] = []
    for i in range(n):
        for t in range(T + 1):
            entries.append((BIKE_STOCK, i, t))
    for i in range(n):
        for t in range(T + 1):
            entries.append((TRIKE_STOCK, i, t))
    for arc in network.ride_arcs:
        entries.append((RIDER_MOVE, *arc))
    for arc in network.reloc_arcs:
        entries.append((BIKE_MOVE, *arc))
    for arc in network.reloc_arcs:
        entries.append((TRIKE_MOVE, *arc))
    catalog = VariableCatalog.build(entries)
    num_cols = len(catalog)

    # Departure / arrival adjacency on each arc family.
    ride_out: dict[tuple[int, int], list[int]] = {}
    ride_in: dict[tuple[int, int], list[int]] = {}
    for arc in network.ride_arcs:
        i, j, dep, arr = arc
        col = catalog.col(RIDER_MOVE, *arc)
        ride_out.setdefault((i, dep), []).append(col)
        ride_in.setdefault((j, arr), []).append(col)
    move_out: dict[tuple[int, int], list[int]] = {}
    move_in: dict[tuple[int, int], list[int]] = {}
    trike_out: dict[tuple[int, int], list[int]] = {}
    trike_in: dict[tuple[int, int], list[int]] = {}
    for arc in network.reloc_arcs:
        i, k, dep, arr = arc
        bm_col = catalog.col(BIKE_MOVE, *arc)
        w_col = catalog.col(TRIKE_MOVE, *arc)
        move_out.setdefault((i, dep), []).append(bm_col)
        move_in.setdefault((k, arr), []).append(bm_col)
        trike_out.setdefault((i, dep), []).append(w_col)
        trike_in.setdefault((k, arr), []).append(w_col)

    builder = _Builder()
    for i in range(n):
        for t in range(T):
            terms = [
                (catalog.col(BIKE_STOCK, i, t + 1), 1.0),
                (catalog.col(BIKE_STOCK, i, t), -1.0),
            ]
            for col in move_out.get((i, t), []) + ride_out.get((i, t), []):
                terms.append((col, 1.0))
            for col in move_in.get((i, t), []) + ride_in.get((i, t), []):
                terms.append((col, -1.0))
            builder.add_row("E", 0.0, terms, ("bike_bal", i, t))
    for i in range(n):
        for t in range(T):
            terms = [
                (catalog.col(TRIKE_STOCK, i, t + 1), 1.0),
                (catalog.col(TRIKE_STOCK, i, t), -1.0),
            ]
            for col in trike_out.get((i, t), []):
                terms.append((col, 1.0))
            for col in trike_in.get((i, t), []):
                terms.append((col, -1.0))
            builder.add_row("E", 0.0, terms, ("trike_bal", i, t))
    capacity = float(instance.cost_model.trike_capacity)
    for arc in network.reloc_arcs:
        builder.add_row(
            "L",
            0.0,
            [
                (catalog.col(BIKE_MOVE, *arc), 1.0),
                (catalog.col(TRIKE_MOVE, *arc), -capacity),
            ],
            ("couple", *arc),
        )
    if instance.trike_placement is None:
        terms = [(catalog.col(TRIKE_STOCK, i, 0), 1.0) for i in range(n)]
        builder.add_row("E", float(instance.trike_count), terms, ("trike_total",))

    # Bounds, objective, integrality.
    lb = np.zeros(num_cols)
    ub = np.full(num_cols, np.inf)
    obj = np.zeros(num_cols)
    integrality = np.zeros(num_cols, dtype=bool)
    free_placement = instance.trike_placement is None
    trike_cap_count = float(instance.trike_count)

    caps = instance.mode.cap if instance.mode.kind == DOCKED else None
    for i in range(n):
        for t in range(T + 1):
            col = catalog.col(BIKE_STOCK, i, t)
            if caps is not None and caps[i] is not None:
                ub[col] = float(caps[i])
            if t == 0:
                lb[col] = ub[col] = float(instance.initial_bikes[i])
    for i in range(n):
        for t in range(T + 1):
            col = catalog.col(TRIKE_STOCK, i, t)
            ub[col] = trike_cap_count  # implied by total trike conservation
            if t == 0:
                if free_placement:
                    integrality[col] = True
                else:
                    lb[col] = ub[col] = float(instance.trike_placement[i])

    fares = _fare_matrix(instance, network)
    for arc in network.ride_arcs:
        i, j, dep, _ = arc
        col = catalog.col(RIDER_MOVE, *arc)
        ub[col] = float(instance.demand.counts[i, j, dep])
        obj[col] = fares[i, j]
    rate = instance.cost_model.trike_km_rate
    handling = instance.cost_model.handling_per_bike
    for arc in network.reloc_arcs:
        i, k, _, _ = arc
        bm_col = catalog.col(BIKE_MOVE, *arc)
        w_col = catalog.col(TRIKE_MOVE, *arc)
        obj[bm_col] = -handling
        obj[w_col] = -rate * float(instance.site_graph.distance_km[i, k])
        ub[w_col] = trike_cap_count
        integrality[w_col] = True

    return MilpProblem(
        num_sites=n,
        num_points=T + 1,
        row_sense=builder.row_sense,
        rhs=np.asarray(builder.rhs, dtype=float),
        tri_rows=np.asarray(builder.rows, dtype=np.int64),
        tri_cols=np.asarray(builder.cols, dtype=np.int64),
        tri_vals=np.asarray(builder.vals, dtype=float),
        lb=lb,
        ub=ub,
        obj=obj,
        obj_offset=-instance.trike_count * instance.fixed_cost_horizon,
        integrality=integrality,
        catalog=catalog,
        row_labels=builder.labels,
    )


def _fare_matrix(instance: Instance, network: SpaceTimeNetwork) -> np.ndarray:
    """Per-pair fare from the bike travel time on the network."""
    n = instance.num_sites
    fares = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            minutes = int(network.bike_periods[i, j]) * instance.time_grid.interval_minutes
            fares[i, j] = fare(minutes, instance.tariff)
    return fares


def decode_solution(problem: MilpProblem, x: np.ndarray) -> FlowSolution:
    """Expand a column vector into stocks and sparse arc flows."""
    if len(x) != problem.num_cols:
        raise InvalidInputError("solution dimension does not match the problem")
    n, points = problem.num_sites, problem.num_points
    bike = np.zeros((n, points))
    trike = np.zeros((n, points))
    rider: dict = {}
    moves: dict = {}
    trikes: dict = {}
    for col, entry in enumerate(problem.catalog.entries):
        value = float(x[col])
        kind = entry[0]
        if kind == BIKE_STOCK:
            bike[entry[1], entry[2]] = value
        elif kind == TRIKE_STOCK:
            trike[entry[1], entry[2]] = value
        elif abs(value) > 1e-11:
            key = entry[1:]
            if kind == RIDER_MOVE:
                rider[key] = value
            elif kind == BIKE_MOVE:
                moves[key] = value
            else:
                trikes[key] = value
    return FlowSolution(
        bike_stock=bike,
        trike_stock=trike,
        rider_flow=rider,
        bike_move=moves,
        trike_move=trikes,
    )


@dataclass(frozen=True)
class ObjectiveBreakdown:
    ride_revenue: float
    trike_travel_cost: float
    bike_handling_cost: float
    fixed_cost: float

    @property
    def net(self) -> float:
        return (
            self.ride_revenue
            - self.trike_travel_cost
            - self.bike_handling_cost
            - self.fixed_cost
        )


def objective_breakdown(problem: MilpProblem, x: np.ndarray) -> ObjectiveBreakdown:
    """Split the objective into its four components.

    The components recombine (with signs) to the reported objective
    within 1e-9.
    """
    if len(x) != problem.num_cols:
        raise InvalidInputError("solution dimension does not match the problem")
    revenue = cost = handling = 0.0
    for col, entry in enumerate(problem.catalog.entries):
        kind = entry[0]
        if kind == RIDER_MOVE:
            revenue += problem.obj[col] * float(x[col])
        elif kind == TRIKE_MOVE:
            cost -= problem.obj[col] * float(x[col])
        elif kind == BIKE_MOVE:
            handling -= problem.obj[col] * float(x[col])
    return ObjectiveBreakdown(
        ride_revenue=revenue,
        trike_travel_cost=cost,
        bike_handling_cost=handling,
        fixed_cost=-problem.obj_offset,
    )


def derived_integrality_gap(problem: MilpProblem, x: np.ndarray) -> float:
    """Largest deviation from integrality over all trike stock columns.

    Trike stocks beyond t = 0 are not branched on; conservation forces
    them integral once movements and initial stocks are.  This measures
    how well that held.
    """
    worst = 0.0
    for col, entry in enumerate(problem.catalog.entries):
        if entry[0] == TRIKE_STOCK:
            v = float(x[col])
            worst = max(worst, abs(v - round(v)))
    return worst


def write_lp(problem: MilpProblem, path: str | Path) -> None:
    """Dump the program in CPLEX LP text format for external cross-checks.

    LP files cannot carry an objective constant; the offset is recorded
    in a comment and must be added to any externally reported optimum.
    """
    lines = [
        "\\ bikeflow problem dump (LP format, maximization)",
        f"\\ objective offset (add to optima): {problem.obj_offset!r}",
        "Maximize",
    ]
    terms = []
    for col in range(problem.num_cols):
        coeff = problem.obj[col]
        if coeff != 0.0:
            terms.append(_signed(coeff, problem.catalog.name(col)))
    lines.append(" obj: " + (" ".join(terms).lstrip("+ ") if terms else "0 " +
                             (problem.catalog.name(0) if problem.num_cols else "x0")))
    lines.append("Subject To")
    matrix = problem.matrix().tocsr() if problem.num_rows else None
    for row in range(problem.num_rows):
        start, end = matrix.indptr[row], matrix.indptr[row + 1]
        parts = [
            _signed(matrix.data[k], problem.catalog.name(matrix.indices[k]))
            for k in range(start, end)
        ]
        op = "=" if problem.row_sense[row] == "E" else "<="
        name = "_".join(str(p) for p in problem.row_labels[row])
        lines.append(f" {name}: " + " ".join(parts).lstrip("+ ") +
                     f" {op} {problem.rhs[row]!r}")
    lines.append("Bounds")
    for col in range(problem.num_cols):
        name = problem.catalog.name(col)
        lo, hi = problem.lb[col], problem.ub[col]
        if lo == hi:
            lines.append(f" {name} = {lo!r}")
        elif np.isfinite(hi):
            lines.append(f" {lo!r} <= {name} <= {hi!r}")
        elif lo != 0.0:
            lines.append(f" {name} >= {lo!r}")
    generals = [
        problem.catalog.name(col)
        for col in range(problem.num_cols)
        if problem.integrality[col]
    ]
    if generals:
        lines.append("Generals")
        lines.append(" " + " ".join(generals))
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _signed(coeff: float, name: str) -> str:
    if coeff < 0:
        return f"- {-coeff!r} {name}"
    return f"+ {coeff!r} {name}"
