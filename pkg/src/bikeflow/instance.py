"""Problem instances: trip ingestion, demand tensors, tariffs and costs.

An :class:`Instance` bundles everything the formulation needs: the site
graph, the time grid, the rider demand tensor, initial bike and trike
distributions, and the tariff / cost parameters.  Instances serialize to
a JSON document with currency fields stored as integer cents so golden
files never accumulate decimal drift.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InfeasibleInstanceError, InvalidInputError, PointOutsideGridError
from .timespace import EARTH_RADIUS_KM, Site, SiteGraph, TimeGrid, centroid_distances_km

DEFAULT_BIKE_SPEED_KMH = 12.0
DEFAULT_TRIKE_SPEED_KMH = 25.0


# ---------------------------------------------------------------------------
# Spatial grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Square-cell grid anchored at a south-west origin corner.

    Cells are half-open: a point exactly on an east or north cell border
    belongs to the higher-index cell.
    """

    origin_lat: float
    origin_lon: float
    cell_m: float
    extent_east_m: float
    extent_north_m: float

    def __post_init__(self) -> None:
        if self.cell_m <= 0:
            raise InvalidInputError("cell size must be positive")
        if self.extent_east_m <= 0 or self.extent_north_m <= 0:
            raise InvalidInputError("grid extent must be positive")

    def project_m(self, lat: float, lon: float) -> tuple[float, float]:
        """Local (east, north) meters of a point relative to the origin."""
        east = (
            math.radians(lon - self.origin_lon)
            * math.cos(math.radians(self.origin_lat))
            * EARTH_RADIUS_KM
            * 1000.0
        )
        north = math.radians(lat - self.origin_lat) * EARTH_RADIUS_KM * 1000.0
        return east, north

    def cell_centroid(self, cell: tuple[int, int]) -> tuple[float, float]:
        """(lat, lon) of a cell center."""
        cx, cy = cell
        east = (cx + 0.5) * self.cell_m
        north = (cy + 0.5) * self.cell_m
        lat = self.origin_lat + math.degrees(north / 1000.0 / EARTH_RADIUS_KM)
        lon = self.origin_lon + math.degrees(
            east / 1000.0 / EARTH_RADIUS_KM / math.cos(math.radians(self.origin_lat))
        )
        return lat, lon


def grid_assign(lat: float, lon: float, grid: GridSpec) -> tuple[int, int]:
    """Cell (east index, north index) containing a point.

    Raises :class:`PointOutsideGridError` when the point lies outside the
    declared bounding box.
    """
    east, north = grid.project_m(lat, lon)
    if east < 0 or north < 0 or east >= grid.extent_east_m or north >= grid.extent_north_m:
        raise PointOutsideGridError(
            f"point ({lat}, {lon}) is outside the grid bounding box"
        )
    return int(east // grid.cell_m), int(north // grid.cell_m)


# ---------------------------------------------------------------------------
# Trip records
# ---------------------------------------------------------------------------

TRIP_COLUMNS = (
    "start_iso_time",
    "end_iso_time",
    "start_lat",
    "start_lon",
    "end_lat",
    "end_lon",
)


@dataclass(frozen=True)
class TripRecord:
    start_time: datetime
    end_time: datetime
    start_lat: float
    start_lon: float
    end_lat: float
    end_lon: float

    def __post_init__(self) -> None:
        if self.end_time <= self.start_time:
            raise InvalidInputError("trip must end after it starts")

    @property
    def start_clock_min(self) -> float:
        t = self.start_time
        return t.hour * 60 + t.minute + t.second / 60.0

    @property
    def end_clock_min(self) -> float:
        t = self.end_time
        return t.hour * 60 + t.minute + t.second / 60.0


@dataclass
class TripReadStats:
    rows_read: int = 0
    malformed: int = 0


def read_trips(path: str | Path) -> tuple[list[TripRecord], TripReadStats]:
    """Read a delimiter-separated trip file; malformed rows are counted, not fatal."""
    stats = TripReadStats()
    trips: list[TripRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return trips, stats
        missing = [c for c in TRIP_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise InvalidInputError(f"trip file is missing columns: {missing}")
        for row in reader:
            stats.rows_read += 1
            try:
                trips.append(
                    TripRecord(
                        start_time=datetime.fromisoformat(row["start_iso_time"]),
                        end_time=datetime.fromisoformat(row["end_iso_time"]),
                        start_lat=float(row["start_lat"]),
                        start_lon=float(row["start_lon"]),
                        end_lat=float(row["end_lat"]),
                        end_lon=float(row["end_lon"]),
                    )
                )
            except (ValueError, TypeError, KeyError, InvalidInputError):
                stats.malformed += 1
    return trips, stats


# ---------------------------------------------------------------------------
# Demand
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DemandTensor:
    """r[i, j, t]: riders wanting to depart i for j during interval t."""

    counts: np.ndarray  # (n, n, T) nonnegative integers, zero diagonal

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 3 or counts.shape[0] != counts.shape[1]:
            raise InvalidInputError("demand tensor must have shape (n, n, T)")
        if counts.size and counts.min() < 0:
            raise InvalidInputError("demand counts must be nonnegative")
        n = counts.shape[0]
        if n and np.any(counts[np.arange(n), np.arange(n), :] != 0):
            raise InvalidInputError("intra-site demand must be zero")
        object.__setattr__(self, "counts", counts)

    @property
    def num_sites(self) -> int:
        return self.counts.shape[0]

    @property
    def num_intervals(self) -> int:
        return self.counts.shape[2]

    def total(self) -> int:
        return int(self.counts.sum())

    def nonzero(self) -> Iterable[tuple[int, int, int, int]]:
        """Yield (i, j, t, count) quadruples in lexicographic order."""
        for i, j, t in zip(*np.nonzero(self.counts)):
            yield int(i), int(j), int(t), int(self.counts[i, j, t])

    @staticmethod
    def zeros(num_sites: int, num_intervals: int) -> "DemandTensor":
        return DemandTensor(np.zeros((num_sites, num_sites, num_intervals), dtype=np.int64))


@dataclass
class AggregationResult:
    cells: list[tuple[int, int]]
    demand: DemandTensor
    kept_trips: int = 0
    dropped_outside_window: int = 0
    dropped_outside_grid: int = 0
    dropped_intracell: int = 0
    dropped_low_demand: int = 0

    @property
    def dropped_total(self) -> int:
        return (
            self.dropped_outside_window
            + self.dropped_outside_grid
            + self.dropped_intracell
            + self.dropped_low_demand
        )


def aggregate_demand(
    trips: Sequence[TripRecord],
    grid: GridSpec,
    time_grid: TimeGrid,
    min_trips: int,
) -> AggregationResult:
    """Bucket trips by (origin cell, destination cell, departure period).

    Cells whose total trip count (as origin plus as destination) falls
    below ``min_trips`` are removed in a single pass, and trips touching
    them are dropped.  Achieved trips are treated as demand.
    """
    if min_trips < 0:
        raise InvalidInputError("min_trips must be nonnegative")
    result = AggregationResult(cells=[], demand=DemandTensor.zeros(0, time_grid.num_intervals))

    bucketed: list[tuple[tuple[int, int], tuple[int, int], int]] = []
    for trip in trips:
        period = time_grid.period_of(trip.start_clock_min)
        if period is None:
            result.dropped_outside_window += 1
            continue
        try:
            origin = grid_assign(trip.start_lat, trip.start_lon, grid)
            dest = grid_assign(trip.end_lat, trip.end_lon, grid)
        except PointOutsideGridError:
            result.dropped_outside_grid += 1
            continue
        if origin == dest:
            result.dropped_intracell += 1
            continue
        bucketed.append((origin, dest, period))

    touches: dict[tuple[int, int], int] = {}
    for origin, dest, _ in bucketed:
        touches[origin] = touches.get(origin, 0) + 1
        touches[dest] = touches.get(dest, 0) + 1
    retained = sorted(cell for cell, count in touches.items() if count >= min_trips)
    index = {cell: k for k, cell in enumerate(retained)}

    counts = np.zeros((len(retained), len(retained), time_grid.num_intervals), dtype=np.int64)
    for origin, dest, period in bucketed:
        if origin in index and dest in index:
            counts[index[origin], index[dest], period] += 1
            result.kept_trips += 1
        else:
            result.dropped_low_demand += 1

    result.cells = retained
    result.demand = DemandTensor(counts)
    return result


def initial_distribution(
    positions: Sequence[tuple[float, float]],
    grid: GridSpec,
    cells: Sequence[tuple[int, int]],
) -> tuple[np.ndarray, int]:
    """Count bikes per retained cell; positions elsewhere are excluded.

    Returns (per-site counts aligned with ``cells``, excluded count).
    """
    index = {cell: k for k, cell in enumerate(cells)}
    counts = np.zeros(len(cells), dtype=np.int64)
    excluded = 0
    for lat, lon in positions:
        try:
            cell = grid_assign(lat, lon, grid)
        except PointOutsideGridError:
            excluded += 1
            continue
        k = index.get(cell)
        if k is None:
            excluded += 1
        else:
            counts[k] += 1
    return counts, excluded


def scale_fleet(b0: Sequence[int], target_total: int) -> list[int]:
    """Proportionally rescale a fleet to an exact total.

    Largest-remainder apportionment with ties broken by lowest site
    index; remainders are compared in exact integer arithmetic.
    """
    if target_total < 0:
        raise InvalidInputError("target_total must be nonnegative")
    counts = [int(v) for v in b0]
    if any(v < 0 for v in counts):
        raise InvalidInputError("initial counts must be nonnegative")
    total = sum(counts)
    if total == 0:
        if target_total == 0:
            return [0] * len(counts)
        raise InvalidInputError("cannot scale an all-zero distribution to a positive total")
    quotas = [v * target_total for v in counts]  # numerator over common denominator `total`
    scaled = [q // total for q in quotas]
    remainders = [q % total for q in quotas]
    leftover = target_total - sum(scaled)
    order = sorted(range(len(counts)), key=lambda k: (-remainders[k], k))
    for k in order[:leftover]:
        scaled[k] += 1
    return scaled


# ---------------------------------------------------------------------------
# Tariff and costs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Tariff:
    """Time-block pricing: one unit price per started block."""

    unit_price: float  # currency per block
    block_minutes: float

    def __post_init__(self) -> None:
        if self.unit_price <= 0:
            raise InvalidInputError("unit_price must be positive")
        if self.block_minutes <= 0:
            raise InvalidInputError("block_minutes must be positive")


def fare(duration_minutes: float, tariff: Tariff) -> float:
    """Charge for a ride of the given duration (at least one block).

    Durations landing exactly on a block boundary pay for that block
    only; a tiny guard keeps float noise from tipping exact multiples
    into the next block.
    """
    if duration_minutes <= 0:
        raise InvalidInputError("duration must be positive")
    blocks = max(1, math.ceil(duration_minutes / tariff.block_minutes - 1e-9))
    return blocks * tariff.unit_price


@dataclass(frozen=True)
class CostModel:
    handling_per_bike: float       # load + transport + unload, per bike moved
    trike_km_rate: float           # trike operating cost per km
    trike_capacity: int            # bikes per trike movement
    trike_fixed_per_hour: float    # per-trike fixed cost, hourly basis
    bike_amortized_per_day: float  # bike purchase cost spread per day

    def __post_init__(self) -> None:
        for name in ("handling_per_bike", "trike_km_rate", "trike_fixed_per_hour",
                     "bike_amortized_per_day"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be nonnegative")
        if self.trike_capacity < 1:
            raise InvalidInputError("trike_capacity must be at least 1")


# ---------------------------------------------------------------------------
# Instance
# ---------------------------------------------------------------------------

DOCKLESS = "dockless"
DOCKED = "docked"


@dataclass(frozen=True)
class Mode:
    """Dockless (unbounded sites) or docked (per-site stock caps).

    A ``None`` cap entry means that site is unbounded even in docked
    mode, which makes an all-None docked instance equivalent to a
    dockless one.
    """

    kind: str
    cap: Optional[tuple[Optional[int], ...]] = None

    def __post_init__(self) -> None:
        if self.kind not in (DOCKLESS, DOCKED):
            raise InvalidInputError(f"unknown mode kind {self.kind!r}")
        if self.kind == DOCKED and self.cap is None:
            raise InvalidInputError("docked mode requires per-site caps")
        if self.kind == DOCKLESS and self.cap is not None:
            raise InvalidInputError("dockless mode carries no caps")

    @staticmethod
    def dockless() -> "Mode":
        return Mode(DOCKLESS)

    @staticmethod
    def docked(cap: Sequence[Optional[int]]) -> "Mode":
        return Mode(DOCKED, tuple(None if c is None else int(c) for c in cap))

    @staticmethod
    def docked_uniform(cap: Optional[int], num_sites: int) -> "Mode":
        return Mode.docked([cap] * num_sites)


@dataclass(frozen=True)
class Instance:
    """Full input of one relocation problem."""

    site_graph: SiteGraph
    time_grid: TimeGrid
    demand: DemandTensor
    initial_bikes: tuple[int, ...]
    trike_count: int
    tariff: Tariff
    cost_model: CostModel
    trike_placement: Optional[tuple[int, ...]] = None  # None = free placement
    bike_speed_kmh: float = DEFAULT_BIKE_SPEED_KMH
    trike_speed_kmh: float = DEFAULT_TRIKE_SPEED_KMH
    mode: Mode = field(default_factory=Mode.dockless)

    def __post_init__(self) -> None:
        n = self.site_graph.num_sites
        if self.demand.num_sites != n:
            raise InvalidInputError("demand tensor does not match the site count")
        if self.demand.num_intervals != self.time_grid.num_intervals:
            raise InvalidInputError("demand tensor does not match the time grid")
        if len(self.initial_bikes) != n:
            raise InvalidInputError("initial_bikes must have one entry per site")
        if any(v < 0 for v in self.initial_bikes):
            raise InvalidInputError("initial_bikes must be nonnegative")
        if self.trike_count < 0:
            raise InvalidInputError("trike_count must be nonnegative")
        if self.trike_placement is not None:
            if len(self.trike_placement) != n:
                raise InvalidInputError("trike_placement must have one entry per site")
            if any(v < 0 for v in self.trike_placement):
                raise InvalidInputError("trike_placement counts must be nonnegative")
            if sum(self.trike_placement) != self.trike_count:
                raise InvalidInputError("trike_placement must sum to trike_count")
        if self.bike_speed_kmh <= 0 or self.trike_speed_kmh <= 0:
            raise InvalidInputError("speeds must be positive")
        if self.mode.kind == DOCKED:
            if len(self.mode.cap) != n:
                raise InvalidInputError("docked caps must have one entry per site")
            for i, cap in enumerate(self.mode.cap):
                if cap is not None and self.initial_bikes[i] > cap:
                    raise InfeasibleInstanceError(
                        f"site {i} starts with {self.initial_bikes[i]} bikes "
                        f"but its dock capacity is {cap}"
                    )

    @property
    def num_sites(self) -> int:
        return self.site_graph.num_sites

    @property
    def fixed_cost_horizon(self) -> float:
        """Per-trike fixed cost scaled from the hourly rate to the horizon."""
        return self.cost_model.trike_fixed_per_hour * self.time_grid.horizon_hours

    @property
    def total_bikes(self) -> int:
        return int(sum(self.initial_bikes))

    def with_(self, **changes) -> "Instance":
        return replace(self, **changes)

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "format": "bikeflow-instance",
            "version": 1,
            "sites": [
                {"id": s.id, "lat": s.lat, "lon": s.lon, "cap": s.cap}
                for s in self.site_graph.sites
            ],
            "distance_km": self.site_graph.distance_km.tolist(),
            "time_grid": {
                "start_clock_min": self.time_grid.start_clock_min,
                "interval_minutes": self.time_grid.interval_minutes,
                "num_intervals": self.time_grid.num_intervals,
            },
            "demand": [list(q) for q in self.demand.nonzero()],
            "initial_bikes": list(self.initial_bikes),
            "trike_count": self.trike_count,
            "trike_placement": None if self.trike_placement is None else list(self.trike_placement),
            "tariff": {
                "unit_price_cents": _cents(self.tariff.unit_price),
                "block_minutes": self.tariff.block_minutes,
            },
            "cost_model": {
                "handling_per_bike_cents": _cents(self.cost_model.handling_per_bike),
                "trike_km_rate_cents": _cents(self.cost_model.trike_km_rate),
                "trike_capacity": self.cost_model.trike_capacity,
                "trike_fixed_per_hour_cents": _cents(self.cost_model.trike_fixed_per_hour),
                "bike_amortized_per_day_cents": _cents(self.cost_model.bike_amortized_per_day),
            },
            "bike_speed_kmh": self.bike_speed_kmh,
            "trike_speed_kmh": self.trike_speed_kmh,
            "mode": {
                "kind": self.mode.kind,
                "cap": None if self.mode.cap is None else list(self.mode.cap),
            },
        }

    @staticmethod
    def from_json_dict(doc: dict) -> "Instance":
        if doc.get("format") != "bikeflow-instance":
            raise InvalidInputError("not a bikeflow instance document")
        sites = tuple(
            Site(id=s["id"], lat=s.get("lat"), lon=s.get("lon"), cap=s.get("cap"))
            for s in doc["sites"]
        )
        graph = SiteGraph(sites=sites, distance_km=np.asarray(doc["distance_km"], dtype=float))
        tg = TimeGrid(**doc["time_grid"])
        counts = np.zeros((len(sites), len(sites), tg.num_intervals), dtype=np.int64)
        for i, j, t, c in doc["demand"]:
            counts[i, j, t] = c
        tariff = Tariff(
            unit_price=doc["tariff"]["unit_price_cents"] / 100.0,
            block_minutes=doc["tariff"]["block_minutes"],
        )
        cm = doc["cost_model"]
        cost_model = CostModel(
            handling_per_bike=cm["handling_per_bike_cents"] / 100.0,
            trike_km_rate=cm["trike_km_rate_cents"] / 100.0,
            trike_capacity=cm["trike_capacity"],
            trike_fixed_per_hour=cm["trike_fixed_per_hour_cents"] / 100.0,
            bike_amortized_per_day=cm["bike_amortized_per_day_cents"] / 100.0,
        )
        mode_doc = doc.get("mode", {"kind": DOCKLESS, "cap": None})
        mode = (
            Mode.dockless()
            if mode_doc["kind"] == DOCKLESS
            else Mode.docked(mode_doc["cap"])
        )
        placement = doc.get("trike_placement")
        return Instance(
            site_graph=graph,
            time_grid=tg,
            demand=DemandTensor(counts),
            initial_bikes=tuple(int(v) for v in doc["initial_bikes"]),
            trike_count=int(doc["trike_count"]),
            trike_placement=None if placement is None else tuple(int(v) for v in placement),
            tariff=tariff,
            cost_model=cost_model,
            bike_speed_kmh=float(doc.get("bike_speed_kmh", DEFAULT_BIKE_SPEED_KMH)),
            trike_speed_kmh=float(doc.get("trike_speed_kmh", DEFAULT_TRIKE_SPEED_KMH)),
            mode=mode,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=1, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @staticmethod
    def load(path: str | Path) -> "Instance":
        return Instance.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _cents(amount: float) -> int:
    cents = round(amount * 100)
    if abs(cents - amount * 100) > 1e-6:
        raise InvalidInputError(f"currency amount {amount} is not a whole cent value")
    return int(cents)


def sites_from_cells(
    cells: Sequence[tuple[int, int]], grid: GridSpec
) -> tuple[tuple[Site, ...], np.ndarray]:
    """Build Site records (with centroids) and their distance matrix from cells."""
    sites = []
    for cx, cy in cells:
        lat, lon = grid.cell_centroid((cx, cy))
        sites.append(Site(id=f"c{cx}_{cy}", lat=lat, lon=lon))
    sites = tuple(sites)
    return sites, centroid_distances_km(sites)
