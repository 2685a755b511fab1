"""Regenerate data/synthetic_trips.csv.

A deterministic 8-cell morning-peak corpus on a 300 m grid: two
bike-rich cells (fed by pre-window arrivals) and several starved cells
whose demand can only be met by trike relocation.  Around 500 rows
total; the analysis window is 07:00-07:30.

The file is checked in; rerun this script only to change the corpus.
"""

from __future__ import annotations

import csv
import math
import random
from pathlib import Path

ORIGIN_LAT = 1.4000
ORIGIN_LON = 103.8200
CELL_M = 300.0
EARTH_RADIUS_KM = 6371.0088

CELLS = {
    "A": (0, 0), "B": (1, 0), "C": (2, 0), "D": (3, 0),
    "E": (0, 1), "F": (1, 1), "G": (2, 1), "H": (3, 1),
}

# (origin cell, destination cell, period 0-5, riders); period p departs
# inside [07:00 + 5p, 07:00 + 5(p+1)).  Starved-cell waves are sized to
# one full trike load (20 bikes) so relocation pays cleanly.
IN_WINDOW = [
    # starved cells: C gets two 20-rider waves, D and H one each
    ("C", "G", 1, 20), ("C", "G", 3, 20),
    ("D", "H", 2, 20), ("H", "D", 4, 20),
    # locally supplied backbone flows
    *[("A", "F", p, 10) for p in range(6)],
    *[("B", "G", p, 5) for p in range(6)],
    *[("F", "A", p, 10) for p in range(6)],
    *[("G", "C", p, 8) for p in range(6)],
    *[("E", "F", p, 2) for p in range(6)],
]

# Bikes parked before the window: trips that END in a cell by 07:00.
# Backbone cells carry enough stock for their own riders; only the
# C/D/H waves require trike relocation.
PRE_WINDOW = [
    ("F", "A", 110), ("G", "B", 70),
    ("F", "E", 15), ("A", "F", 15), ("A", "G", 20),
]


def latlon(cell: tuple[int, int], east_off: float, north_off: float) -> tuple[float, float]:
    east = (cell[0] + 0.5) * CELL_M + east_off
    north = (cell[1] + 0.5) * CELL_M + north_off
    lat = ORIGIN_LAT + math.degrees(north / 1000.0 / EARTH_RADIUS_KM)
    lon = ORIGIN_LON + math.degrees(
        east / 1000.0 / EARTH_RADIUS_KM / math.cos(math.radians(ORIGIN_LAT))
    )
    return lat, lon


def clock(minutes_from_midnight: float) -> str:
    total = int(round(minutes_from_midnight * 60))
    h, rem = divmod(total, 3600)
    m, s = divmod(rem, 60)
    return f"2017-10-18T{h:02d}:{m:02d}:{s:02d}"


def main() -> None:
    rng = random.Random(20171018)
    rows = []

    def jitter() -> float:
        return rng.uniform(-100.0, 100.0)

    for origin, dest, count in PRE_WINDOW:
        for _ in range(count):
            start = rng.uniform(6 * 60 + 35, 6 * 60 + 50)
            end = min(start + rng.uniform(4, 9), 6 * 60 + 59.5)
            olat, olon = latlon(CELLS[origin], jitter(), jitter())
            dlat, dlon = latlon(CELLS[dest], jitter(), jitter())
            rows.append((clock(start), clock(end), olat, olon, dlat, dlon))

    for origin, dest, period, count in IN_WINDOW:
        for _ in range(count):
            start = 7 * 60 + 5 * period + rng.uniform(0.0, 4.9)
            end = start + rng.uniform(3, 8)
            olat, olon = latlon(CELLS[origin], jitter(), jitter())
            dlat, dlon = latlon(CELLS[dest], jitter(), jitter())
            rows.append((clock(start), clock(end), olat, olon, dlat, dlon))

    rows.sort()
    out = Path(__file__).resolve().parent.parent / "data" / "synthetic_trips.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ("start_iso_time", "end_iso_time", "start_lat", "start_lon",
             "end_lat", "end_lon")
        )
        for start, end, olat, olon, dlat, dlon in rows:
            writer.writerow((start, end, f"{olat:.6f}", f"{olon:.6f}",
                             f"{dlat:.6f}", f"{dlon:.6f}"))
    print(f"wrote {len(rows)} trips to {out}")


if __name__ == "__main__":
    main()
