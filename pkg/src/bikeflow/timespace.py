"""Discretized space-time network underlying all bike and trike flows.

Nodes are (site, period) pairs on a uniform time grid with points indexed
0..T.  Movement arcs connect sites strictly forward in time; bikes and
trikes get separate arc sets because they travel at different speeds.
Holding arcs (i, t) -> (i, t+1) are implicit: every node has one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInputError

EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True)
class TimeGrid:
    """Uniform discretization of the analysis horizon.

    Time points are indexed 0..num_intervals; interval t spans wall-clock
    minutes [start + t*dt, start + (t+1)*dt).
    """

    start_clock_min: int
    interval_minutes: int
    num_intervals: int

    def __post_init__(self) -> None:
        if self.interval_minutes <= 0:
            raise InvalidInputError("interval_minutes must be positive")
        if self.num_intervals < 1:
            raise InvalidInputError("num_intervals must be at least 1")

    @property
    def horizon_minutes(self) -> int:
        return self.interval_minutes * self.num_intervals

    @property
    def horizon_hours(self) -> float:
        return self.horizon_minutes / 60.0

    def period_of(self, clock_min: float) -> Optional[int]:
        """Interval index containing a wall-clock minute, None if outside."""
        offset = clock_min - self.start_clock_min
        if offset < 0 or offset >= self.horizon_minutes:
            return None
        return int(offset // self.interval_minutes)


@dataclass(frozen=True)
class Site:
    """One parking site (a grid cell in ingested instances)."""

    id: str
    lat: Optional[float] = None
    lon: Optional[float] = None
    cap: Optional[int] = None  # informational dock capacity, if surveyed


@dataclass(frozen=True)
class SiteGraph:
    """Sites plus the pairwise shortest-path distance matrix (km)."""

    sites: tuple[Site, ...]
    distance_km: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.sites)
        ids = [s.id for s in self.sites]
        if len(set(ids)) != n:
            raise InvalidInputError("site ids must be unique")
        dist = np.asarray(self.distance_km, dtype=float)
        if dist.shape != (n, n):
            raise InvalidInputError(
                f"distance matrix shape {dist.shape} does not match {n} sites"
            )
        if n and not np.all(np.isfinite(dist)):
            raise InvalidInputError("distances must be finite")
        if n and np.any(np.diagonal(dist) != 0.0):
            raise InvalidInputError("self-distances must be zero")
        off = ~np.eye(n, dtype=bool)
        if n > 1 and np.any(dist[off] <= 0.0):
            raise InvalidInputError("distances between distinct sites must be positive")
        object.__setattr__(self, "distance_km", dist)

    @property
    def num_sites(self) -> int:
        return len(self.sites)


def centroid_distances_km(sites: Sequence[Site]) -> np.ndarray:
    """Straight-line (equirectangular) distances between site centroids.

    A stand-in for road-network distances when none are available.
    """
    n = len(sites)
    out = np.zeros((n, n))
    for s in sites:
        if s.lat is None or s.lon is None:
            raise InvalidInputError(f"site {s.id} has no centroid coordinates")
    lats = np.radians([s.lat for s in sites])
    lons = np.radians([s.lon for s in sites])
    mean_lat = float(np.mean(lats)) if n else 0.0
    for i in range(n):
        dx = (lons - lons[i]) * math.cos(mean_lat) * EARTH_RADIUS_KM
        dy = (lats - lats[i]) * EARTH_RADIUS_KM
        out[i, :] = np.hypot(dx, dy)
    np.fill_diagonal(out, 0.0)
    return out


def travel_periods(distance_km: float, speed_kmh: float, interval_minutes: int) -> int:
    """Number of whole periods needed to cover a distance, floored at 1.

    Travel times shorter than one interval still occupy a full period on
    the space-time lattice.
    """
    if distance_km <= 0:
        raise InvalidInputError("distance must be positive")
    if speed_kmh <= 0:
        raise InvalidInputError("speed must be positive")
    if interval_minutes <= 0:
        raise InvalidInputError("interval_minutes must be positive")
    minutes = distance_km / speed_kmh * 60.0
    return max(1, math.ceil(minutes / interval_minutes))


# Movement arc: (origin site, destination site, departure point, arrival point).
Arc = tuple[int, int, int, int]


@dataclass(frozen=True)
class SpaceTimeNetwork:
    """All movement arcs of one instance, in deterministic order.

    Arcs are ordered by (origin, destination, departure).  Arcs whose
    arrival would cross the horizon are never generated.
    """

    num_sites: int
    num_intervals: int
    ride_arcs: tuple[Arc, ...]
    reloc_arcs: tuple[Arc, ...]
    bike_periods: np.ndarray = field(repr=False)   # (n, n) int, 0 on diagonal
    trike_periods: np.ndarray = field(repr=False)

    @property
    def num_points(self) -> int:
        return self.num_intervals + 1


def _pair_periods(graph: SiteGraph, speed_kmh: float, interval_minutes: int) -> np.ndarray:
    n = graph.num_sites
    periods = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            periods[i, j] = travel_periods(
                float(graph.distance_km[i, j]), speed_kmh, interval_minutes
            )
    return periods


def _arcs_for(periods: np.ndarray, horizon: int) -> tuple[Arc, ...]:
    n = periods.shape[0]
    arcs: list[Arc] = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            tau = int(periods[i, j])
            for t in range(horizon - tau + 1):
                arcs.append((i, j, t, t + tau))
    return tuple(arcs)


def build_network(
    site_graph: SiteGraph,
    time_grid: TimeGrid,
    bike_speed_kmh: float,
    trike_speed_kmh: float,
) -> SpaceTimeNetwork:
    """Generate ride and relocation arcs for every site pair and period.

    A ride arc (i, j, t, t+tau_b) exists whenever t + tau_b <= T, with
    tau_b the bike travel duration of the pair; relocation arcs use the
    trike duration.  Zero or one sites yield a holding-only network.
    """
    if bike_speed_kmh <= 0 or trike_speed_kmh <= 0:
        raise InvalidInputError("speeds must be positive")
    bike_periods = _pair_periods(site_graph, bike_speed_kmh, time_grid.interval_minutes)
    trike_periods = _pair_periods(site_graph, trike_speed_kmh, time_grid.interval_minutes)
    T = time_grid.num_intervals
    return SpaceTimeNetwork(
        num_sites=site_graph.num_sites,
        num_intervals=T,
        ride_arcs=_arcs_for(bike_periods, T),
        reloc_arcs=_arcs_for(trike_periods, T),
        bike_periods=bike_periods,
        trike_periods=trike_periods,
    )
