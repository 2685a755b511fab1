"""Command-line entry point.

Commands: ingest raw trips into an instance file, solve an instance,
run sensitivity sweeps, compare docked capacities, verify a solution
and export a time-space diagram.  Exit codes: 0 success, 2 infeasible,
3 limit reached with a reported gap, 4 input error.

All outputs are byte-identical across repeated runs: nothing here
depends on wall-clock time, process ids or randomness.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import BikeflowError, InfeasibleInstanceError, InvalidInputError
from .instance import (
    CostModel,
    GridSpec,
    Instance,
    Mode,
    Tariff,
    aggregate_demand,
    initial_distribution,
    read_trips,
    sites_from_cells,
)
from .instance import DemandTensor
from .metrics import METRICS_COLUMNS, compute_metrics, metrics_record
from .milp import decode_solution, formulate, write_lp
from .oracle import verify_solution
from .solution import FlowSolution
from .solver import MilpStatus, SolveLimits, solve_milp
from .sweep import (
    DemandResponse,
    ScenarioGrid,
    SensitivityDefaults,
    compare_dock,
    run_sweep,
    write_results,
)
from .timespace import SiteGraph, TimeGrid, build_network

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_LIMIT = 3
EXIT_INPUT = 4

MAX_DIAGRAM_SITES = 50
MAX_DIAGRAM_PERIODS = 100

# Base-case operating parameters used when ingesting raw trips.
INGEST_TARIFF = Tariff(unit_price=1.0, block_minutes=15.0)
INGEST_COSTS = CostModel(
    handling_per_bike=0.5,
    trike_km_rate=0.4,
    trike_capacity=20,
    trike_fixed_per_hour=70.0,
    bike_amortized_per_day=1.5,
)

logger = logging.getLogger("bikeflow.cli")


def _parse_clock(text: str) -> int:
    try:
        hours, minutes = text.split(":")
        return int(hours) * 60 + int(minutes)
    except ValueError as exc:
        raise InvalidInputError(f"expected HH:MM, got {text!r}") from exc


def _parse_latlon(text: str) -> tuple[float, float]:
    try:
        lat, lon = (float(p) for p in text.split(","))
        return lat, lon
    except ValueError as exc:
        raise InvalidInputError(f"expected LAT,LON, got {text!r}") from exc


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace) -> int:
    trips, stats = read_trips(args.trips)
    if stats.rows_read and stats.malformed * 2 > stats.rows_read:
        print(
            f"error: {stats.malformed} of {stats.rows_read} rows are malformed",
            file=sys.stderr,
        )
        return EXIT_INPUT

    lat0, lon0 = _parse_latlon(args.grid_origin)
    extent_m = args.grid_extent_km * 1000.0
    grid = GridSpec(
        origin_lat=lat0, origin_lon=lon0, cell_m=args.cell_m,
        extent_east_m=extent_m, extent_north_m=extent_m,
    )
    start_min = _parse_clock(args.start)
    end_min = _parse_clock(args.end)
    span = end_min - start_min
    if span <= 0 or span % args.interval_min != 0:
        print(
            "error: the window must be a positive whole number of intervals",
            file=sys.stderr,
        )
        return EXIT_INPUT
    time_grid = TimeGrid(
        start_clock_min=start_min,
        interval_minutes=args.interval_min,
        num_intervals=span // args.interval_min,
    )

    in_window = [t for t in trips if time_grid.period_of(t.start_clock_min) is not None]
    agg = aggregate_demand(in_window, grid, time_grid, args.min_trips)

    # Initial bikes: endpoints of trips completed at or before the window
    # start are the last known fixes of idle bikes.
    pre_window = [
        (t.end_lat, t.end_lon)
        for t in trips
        if t.end_clock_min <= start_min
    ]
    b0, excluded_bikes = initial_distribution(pre_window, grid, agg.cells)

    if agg.cells:
        sites, distance_km = sites_from_cells(agg.cells, grid)
    else:
        sites, distance_km = (), np.zeros((0, 0))
    graph = SiteGraph(sites=sites, distance_km=distance_km)
    trike_count = args.trikes if agg.cells else 0
    instance = Instance(
        site_graph=graph,
        time_grid=time_grid,
        demand=agg.demand,
        initial_bikes=tuple(int(v) for v in b0),
        trike_count=trike_count,
        trike_placement=None,
        tariff=INGEST_TARIFF,
        cost_model=INGEST_COSTS,
        bike_speed_kmh=args.bike_speed,
        trike_speed_kmh=args.trike_speed,
        mode=Mode.dockless(),
    )
    instance.save(args.out)

    report = {
        "rows_read": stats.rows_read,
        "malformed": stats.malformed,
        "trips_in_window": len(in_window),
        "trips_kept": agg.kept_trips,
        "dropped_outside_window": len(trips) - len(in_window),
        "dropped_outside_grid": agg.dropped_outside_grid,
        "dropped_intracell": agg.dropped_intracell,
        "dropped_low_demand": agg.dropped_low_demand,
        "cells_retained": len(agg.cells),
        "initial_bikes_placed": int(sum(b0)) if len(b0) else 0,
        "initial_bikes_excluded": excluded_bikes,
    }
    report_path = Path(str(args.out) + ".report.json")
    report_path.write_text(json.dumps(report, indent=1, sort_keys=True) + "\n",
                           encoding="utf-8")
    print(
        f"ingested {agg.kept_trips} trips into {len(agg.cells)} cells; "
        f"instance written to {args.out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _load_instance_with_mode(args: argparse.Namespace) -> Instance:
    instance = Instance.load(args.instance)
    if getattr(args, "mode", None) == "dockless":
        instance = instance.with_(mode=Mode.dockless())
    elif getattr(args, "mode", None) == "docked":
        if getattr(args, "cap", None) is not None:
            instance = instance.with_(
                mode=Mode.docked_uniform(args.cap, instance.num_sites)
            )
        else:
            site_caps = [s.cap for s in instance.site_graph.sites]
            instance = instance.with_(mode=Mode.docked(site_caps))
    return instance


def cmd_solve(args: argparse.Namespace) -> int:
    try:
        instance = _load_instance_with_mode(args)
    except InfeasibleInstanceError as exc:
        print(f"infeasible by construction: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    network = build_network(
        instance.site_graph, instance.time_grid,
        instance.bike_speed_kmh, instance.trike_speed_kmh,
    )
    try:
        problem = formulate(instance, network)
    except InfeasibleInstanceError as exc:
        print(f"infeasible by construction: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if args.dump_lp:
        write_lp(problem, args.dump_lp)
    limits = SolveLimits(
        time_seconds=args.time_limit,
        max_nodes=args.node_limit,
        rel_gap=args.gap,
    )
    result = solve_milp(problem, limits)
    summary = result.summary()
    prefix = str(args.out)
    if result.x is not None:
        solution = decode_solution(problem, result.x)
        report = verify_solution(instance, solution)
        if not report.feasible:
            print("internal error: incumbent failed verification", file=sys.stderr)
            return 1
        solution.save(prefix + ".solution.json")
        metrics = compute_metrics(instance, solution, check_feasible=False)
        with open(prefix + ".metrics.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_COLUMNS)
            writer.writerow(metrics_record(metrics))
    Path(prefix + ".summary.json").write_text(
        json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(
        f"status={summary['status']} objective={summary['objective']} "
        f"gap={summary['gap']} nodes={summary['nodes']}"
    )
    if result.status in (MilpStatus.OPTIMAL, MilpStatus.FEASIBLE):
        return EXIT_OK
    if result.status is MilpStatus.INFEASIBLE:
        print("no feasible assignment exists for this instance", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_LIMIT


# ---------------------------------------------------------------------------
# sweep / compare-dock / verify
# ---------------------------------------------------------------------------

def cmd_sweep(args: argparse.Namespace) -> int:
    instance = Instance.load(args.instance)
    spec = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    defaults = (
        SensitivityDefaults(**spec["defaults"])
        if "defaults" in spec
        else SensitivityDefaults.from_instance(instance)
    )
    grid = ScenarioGrid(
        axis=spec["axis"], values=tuple(spec["values"]), defaults=defaults
    )
    response = (
        DemandResponse(
            prices=tuple(spec["response"]["prices"]),
            factors=tuple(spec["response"]["factors"]),
        )
        if "response" in spec
        else DemandResponse.identity()
    )
    limits_doc = spec.get("limits", {})
    limits = SolveLimits(
        time_seconds=limits_doc.get("time_seconds", 1800.0),
        max_nodes=limits_doc.get("max_nodes", 1_000_000),
        rel_gap=limits_doc.get("rel_gap", 1e-6),
    )
    run_id = args.run_id or _digest(Path(args.instance), Path(args.spec))
    results = run_sweep(
        instance, grid, limits, response, max_workers=args.workers
    )
    write_results(results, args.out, run_id)
    for res in results:
        print(f"{res.axis}={res.value}: status={res.status} objective={res.objective}")
    if any(res.status == MilpStatus.LIMIT_REACHED.value for res in results):
        return EXIT_LIMIT
    return EXIT_OK


def _digest(*paths: Path) -> str:
    h = hashlib.sha256()
    for path in paths:
        h.update(path.read_bytes())
    return h.hexdigest()[:12]


def cmd_compare_dock(args: argparse.Namespace) -> int:
    instance = Instance.load(args.instance)
    caps = [int(c) for c in args.caps.split(",")]
    comparison = compare_dock(instance, caps, args.downscale)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("label", "cap", "status", "revenue_cents"))
        writer.writerow(
            ("dockless", "", "optimal", int(round(comparison.dockless_revenue * 100)))
        )
        for point in comparison.points:
            writer.writerow(
                (
                    "docked",
                    point.cap,
                    point.status,
                    "" if point.revenue is None else int(round(point.revenue * 100)),
                )
            )
    if comparison.convergence_cap is None:
        print("docked revenue never reached the dockless level in this range")
    else:
        print(
            f"docked revenue matches dockless from capacity "
            f"{comparison.convergence_cap} up"
        )
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    instance = Instance.load(args.instance)
    solution = FlowSolution.load(args.solution)
    report = verify_solution(
        instance, solution, feas_tol=args.feas_tol, int_tol=args.int_tol
    )
    doc = {
        "feasible": report.feasible,
        "max_residual": report.max_residual,
        "residuals": report.residuals,
        "integrality_violation": report.integrality_violation,
        "messages": report.messages,
    }
    print(json.dumps(doc, indent=1, sort_keys=True))
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------
# export-diagram
# ---------------------------------------------------------------------------

def _diagram_dict(instance: Instance, solution: FlowSolution) -> dict:
    n = instance.num_sites
    points = solution.num_points
    inflow = [[0.0] * points for _ in range(n)]
    outflow = [[0.0] * points for _ in range(n)]
    for flows in (solution.rider_flow, solution.bike_move):
        for (i, j, dep, arr), value in flows.items():
            outflow[i][dep] += value
            inflow[j][arr] += value
    nodes = []
    for i in range(n):
        site = instance.site_graph.sites[i]
        for t in range(points):
            nodes.append(
                {
                    "site": site.id,
                    "site_index": i,
                    "period": t,
                    "bikes": solution.bike_stock[i, t],
                    "trikes": solution.trike_stock[i, t],
                    "inflow": inflow[i][t],
                    "outflow": outflow[i][t],
                }
            )

    def edges(flows: dict, label: str) -> list[dict]:
        out = []
        for (i, j, dep, arr), value in sorted(flows.items()):
            out.append(
                {
                    "from_site": instance.site_graph.sites[i].id,
                    "to_site": instance.site_graph.sites[j].id,
                    "depart": dep,
                    "arrive": arr,
                    label: value,
                }
            )
        return out

    rider_edges = edges(solution.rider_flow, "riders")
    trike_edges = []
    for (i, j, dep, arr), value in sorted(solution.trike_move.items()):
        trike_edges.append(
            {
                "from_site": instance.site_graph.sites[i].id,
                "to_site": instance.site_graph.sites[j].id,
                "depart": dep,
                "arrive": arr,
                "trikes": value,
                "bikes_carried": solution.bike_move.get((i, j, dep, arr), 0.0),
            }
        )
    return {
        "format": "bikeflow-diagram",
        "num_sites": n,
        "num_points": points,
        "nodes": nodes,
        "rider_edges": rider_edges,
        "trike_edges": trike_edges,
    }


def _diagram_dot(doc: dict) -> str:
    lines = [
        "digraph timespace {",
        "  rankdir=LR;",
        '  node [shape=circle, fontsize=10];',
    ]
    for t in range(doc["num_points"]):
        same = " ".join(
            f'"{node["site"]}@{t}"'
            for node in doc["nodes"]
            if node["period"] == t
        )
        lines.append(f"  {{ rank=same; {same} }}")
    for node in doc["nodes"]:
        label = f'{node["site"]} t{node["period"]}\\n{node["bikes"]:g}'
        lines.append(f'  "{node["site"]}@{node["period"]}" [label="{label}"];')
    for edge in doc["rider_edges"]:
        lines.append(
            f'  "{edge["from_site"]}@{edge["depart"]}" -> '
            f'"{edge["to_site"]}@{edge["arrive"]}" '
            f'[color=gray, label="{edge["riders"]:g}"];'
        )
    for edge in doc["trike_edges"]:
        lines.append(
            f'  "{edge["from_site"]}@{edge["depart"]}" -> '
            f'"{edge["to_site"]}@{edge["arrive"]}" '
            f'[color=red, penwidth=2, label="{edge["bikes_carried"]:g}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_export_diagram(args: argparse.Namespace) -> int:
    instance = Instance.load(args.instance)
    solution = FlowSolution.load(args.solution)
    if (
        instance.num_sites > MAX_DIAGRAM_SITES
        or instance.time_grid.num_intervals > MAX_DIAGRAM_PERIODS
    ):
        print(
            "error: diagram export is meant for small cases "
            f"(at most {MAX_DIAGRAM_SITES} sites x {MAX_DIAGRAM_PERIODS} periods); "
            "filter the instance or plot the solution file directly",
            file=sys.stderr,
        )
        return EXIT_INPUT
    doc = _diagram_dict(instance, solution)
    if args.format == "json":
        Path(args.out).write_text(
            json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )
    else:
        Path(args.out).write_text(_diagram_dot(doc), encoding="utf-8")
    print(
        f"diagram with {len(doc['nodes'])} nodes, {len(doc['rider_edges'])} rider "
        f"edges, {len(doc['trike_edges'])} trike edges written to {args.out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bikeflow",
        description="Relocation optimization for dockless bikesharing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="aggregate raw trips into an instance file")
    p.add_argument("--trips", required=True)
    p.add_argument("--grid-origin", required=True, help="LAT,LON of the SW corner")
    p.add_argument("--grid-extent-km", type=float, default=30.0)
    p.add_argument("--cell-m", type=float, default=300.0)
    p.add_argument("--interval-min", type=int, default=5)
    p.add_argument("--start", default="07:00")
    p.add_argument("--end", default="10:00")
    p.add_argument("--min-trips", type=int, default=10)
    p.add_argument("--trikes", type=int, default=3)
    p.add_argument("--bike-speed", type=float, default=12.0)
    p.add_argument("--trike-speed", type=float, default=25.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("solve", help="solve an instance to proven optimality")
    p.add_argument("--instance", required=True)
    p.add_argument("--mode", choices=["dockless", "docked"])
    p.add_argument("--cap", type=int, help="uniform dock capacity for --mode docked")
    p.add_argument("--time-limit", type=float, default=1800.0)
    p.add_argument("--node-limit", type=int, default=1_000_000)
    p.add_argument("--gap", type=float, default=1e-6)
    p.add_argument("--dump-lp", help="also write the LP-format problem dump here")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run a one-factor-at-a-time sweep")
    p.add_argument("--instance", required=True)
    p.add_argument("--spec", required=True, help="JSON sweep specification")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--run-id", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare-dock", help="docked revenue versus dockless")
    p.add_argument("--instance", required=True)
    p.add_argument("--caps", required=True, help="comma-separated ascending caps")
    p.add_argument("--downscale", type=int, required=True,
                   help="max initial bikes per site before capping")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare_dock)

    p = sub.add_parser("verify", help="independently check a solution")
    p.add_argument("--instance", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--feas-tol", type=float, default=1e-7)
    p.add_argument("--int-tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export-diagram", help="emit the time-space graph")
    p.add_argument("--instance", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--format", choices=["json", "dot"], default="json")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_diagram)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInputError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleInstanceError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except BikeflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
