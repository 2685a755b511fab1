"""Decoded solutions: stocks per (site, time point) and sparse arc flows.

This is the lingua franca between the solver, the verifier, the metrics
and the diagram exporter.  Movement flows are keyed by
(origin, destination, departure point, arrival point); zero flows are
omitted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

ArcKey = tuple[int, int, int, int]


def _flows_to_list(flows: dict[ArcKey, float]) -> list[list]:
    return [[*key, value] for key, value in sorted(flows.items())]


def _flows_from_list(rows) -> dict[ArcKey, float]:
    return {(int(i), int(j), int(t0), int(t1)): float(v) for i, j, t0, t1, v in rows}


@dataclass
class FlowSolution:
    """One feasible (or candidate) assignment of all flows and stocks."""

    bike_stock: np.ndarray   # (n, T+1)
    trike_stock: np.ndarray  # (n, T+1)
    rider_flow: dict[ArcKey, float] = field(default_factory=dict)
    bike_move: dict[ArcKey, float] = field(default_factory=dict)
    trike_move: dict[ArcKey, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.bike_stock = np.asarray(self.bike_stock, dtype=float)
        self.trike_stock = np.asarray(self.trike_stock, dtype=float)
        if self.bike_stock.shape != self.trike_stock.shape or self.bike_stock.ndim != 2:
            raise InvalidInputError("stock matrices must share shape (sites, points)")

    @property
    def num_sites(self) -> int:
        return self.bike_stock.shape[0]

    @property
    def num_points(self) -> int:
        return self.bike_stock.shape[1]

    # -- conservation helpers ------------------------------------------------
    # A flow is in transit at point t for dep < t <= arr: it left the
    # origin stock after point dep and joins the destination stock only
    # at point arr + 1.

    def _in_transit(self, flows: dict[ArcKey, float], t: int) -> float:
        return sum(v for (_, _, dep, arr), v in flows.items() if dep < t <= arr)

    def bikes_in_system(self, t: int) -> float:
        """Stationary plus in-transit bikes at time point t."""
        transit = self._in_transit(self.bike_move, t) + self._in_transit(self.rider_flow, t)
        return float(self.bike_stock[:, t].sum()) + transit

    def trikes_in_system(self, t: int) -> float:
        return float(self.trike_stock[:, t].sum()) + self._in_transit(self.trike_move, t)

    def total_met_demand(self) -> float:
        return sum(self.rider_flow.values())

    def total_relocated_bikes(self) -> float:
        return sum(self.bike_move.values())

    # -- serialization --------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "format": "bikeflow-solution",
            "version": 1,
            "bike_stock": self.bike_stock.tolist(),
            "trike_stock": self.trike_stock.tolist(),
            "rider_flow": _flows_to_list(self.rider_flow),
            "bike_move": _flows_to_list(self.bike_move),
            "trike_move": _flows_to_list(self.trike_move),
        }

    @staticmethod
    def from_json_dict(doc: dict) -> "FlowSolution":
        if doc.get("format") != "bikeflow-solution":
            raise InvalidInputError("not a bikeflow solution document")
        return FlowSolution(
            bike_stock=np.asarray(doc["bike_stock"], dtype=float),
            trike_stock=np.asarray(doc["trike_stock"], dtype=float),
            rider_flow=_flows_from_list(doc["rider_flow"]),
            bike_move=_flows_from_list(doc["bike_move"]),
            trike_move=_flows_from_list(doc["trike_move"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=1, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @staticmethod
    def load(path: str | Path) -> "FlowSolution":
        return FlowSolution.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))
