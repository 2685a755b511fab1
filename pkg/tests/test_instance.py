"""Ingestion, demand aggregation, fleet scaling and tariffs."""

import math
import random
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bikeflow import (
    GridSpec,
    InfeasibleInstanceError,
    Instance,
    InvalidInputError,
    Mode,
    PointOutsideGridError,
    Tariff,
    TimeGrid,
    TripRecord,
    aggregate_demand,
    fare,
    grid_assign,
    initial_distribution,
    read_trips,
    scale_fleet,
)
from .helpers import make_instance, two_site_relocation

GRID = GridSpec(
    origin_lat=1.4000,
    origin_lon=103.8200,
    cell_m=300.0,
    extent_east_m=3000.0,
    extent_north_m=3000.0,
)


def point_at(east_m: float, north_m: float) -> tuple[float, float]:
    """Invert the grid projection so tests can speak meters."""
    lat = GRID.origin_lat + math.degrees(north_m / 1000.0 / 6371.0088)
    lon = GRID.origin_lon + math.degrees(
        east_m / 1000.0 / 6371.0088 / math.cos(math.radians(GRID.origin_lat))
    )
    return lat, lon


def trip(start_min: float, o_east, o_north, d_east, d_north, duration=6.0) -> TripRecord:
    def iso(total_min):
        h, rem = divmod(int(round(total_min * 60)), 3600)
        m, s = divmod(rem, 60)
        return datetime.fromisoformat(f"2017-10-18T{h:02d}:{m:02d}:{s:02d}")

    olat, olon = point_at(o_east, o_north)
    dlat, dlon = point_at(d_east, d_north)
    return TripRecord(
        start_time=iso(start_min),
        end_time=iso(start_min + duration),
        start_lat=olat,
        start_lon=olon,
        end_lat=dlat,
        end_lon=dlon,
    )


class TestGridAssign:
    def test_origin_maps_to_cell_zero(self):
        assert grid_assign(GRID.origin_lat, GRID.origin_lon, GRID) == (0, 0)

    def test_interior_point(self):
        lat, lon = point_at(450.0, 10.0)
        assert grid_assign(lat, lon, GRID) == (1, 0)

    def test_exact_boundary_belongs_to_the_higher_cell(self):
        # Half-open cells: [k*300, (k+1)*300) east, so 300 m east is cell 1.
        lat, lon = point_at(300.0, 0.0)
        assert grid_assign(lat, lon, GRID) == (1, 0)

    def test_outside_box_rejected(self):
        lat, lon = point_at(-5.0, 100.0)
        with pytest.raises(PointOutsideGridError):
            grid_assign(lat, lon, GRID)
        lat, lon = point_at(100.0, 3000.0)
        with pytest.raises(PointOutsideGridError):
            grid_assign(lat, lon, GRID)


TG = TimeGrid(start_clock_min=420, interval_minutes=5, num_intervals=36)


class TestAggregateDemand:
    def test_bucketing_by_departure_period(self):
        # Departure 07:03 with 5-min intervals from 07:00 -> period 0.
        res = aggregate_demand([trip(423, 50, 50, 350, 50)], GRID, TG, min_trips=0)
        assert res.cells == [(0, 0), (1, 0)]
        assert res.demand.counts[0, 1, 0] == 1

    def test_low_demand_cell_removed(self):
        # 9 trips touch the pair of cells; a threshold of 10 removes both.
        trips = [trip(425 + k, 50, 50, 350, 50) for k in range(9)]
        res = aggregate_demand(trips, GRID, TG, min_trips=10)
        assert res.cells == []
        assert res.dropped_low_demand == 9

    def test_two_identical_trips_accumulate(self):
        trips = [trip(423, 50, 50, 350, 50)] * 2
        res = aggregate_demand(trips, GRID, TG, min_trips=0)
        assert res.demand.counts[0, 1, 0] == 2

    def test_filter_counts_origins_plus_destinations(self):
        # Cell (0,0) appears 6 times as origin and 4 as destination = 10.
        trips = [trip(430 + k, 50, 50, 350, 50) for k in range(6)]
        trips += [trip(460 + k, 350, 50, 50, 50) for k in range(4)]
        res = aggregate_demand(trips, GRID, TG, min_trips=10)
        assert (0, 0) in res.cells and (1, 0) in res.cells

    def test_trip_conservation(self):
        rng = random.Random(5)
        trips = []
        for _ in range(300):
            start = rng.uniform(410, 610)  # some fall outside the window
            o = (rng.uniform(-50, 2950), rng.uniform(0, 2950))
            d = (rng.uniform(-50, 2950), rng.uniform(0, 2950))
            trips.append(trip(start, o[0], o[1], d[0], d[1]))
        res = aggregate_demand(trips, GRID, TG, min_trips=3)
        assert res.kept_trips + res.dropped_total == len(trips)
        assert res.kept_trips == res.demand.total()

    def test_empty_input_is_valid(self):
        res = aggregate_demand([], GRID, TG, min_trips=10)
        assert res.cells == [] and res.demand.total() == 0


class TestInitialDistribution:
    def test_zero_bikes(self):
        counts, excluded = initial_distribution([], GRID, [(0, 0)])
        assert counts.tolist() == [0] and excluded == 0

    def test_three_bikes_in_one_cell(self):
        pos = [point_at(100, 100)] * 3
        counts, excluded = initial_distribution(pos, GRID, [(0, 0), (1, 0)])
        assert counts.tolist() == [3, 0] and excluded == 0

    def test_bike_in_filtered_cell_excluded(self):
        pos = [point_at(100, 100), point_at(2000, 2000)]
        counts, excluded = initial_distribution(pos, GRID, [(0, 0)])
        assert counts.sum() + excluded == len(pos)
        assert counts.tolist() == [1] and excluded == 1


class TestScaleFleet:
    def test_identity(self):
        assert scale_fleet((7, 3, 5), 15) == [7, 3, 5]

    def test_symmetric_halving(self):
        assert scale_fleet((10, 10), 10) == [5, 5]

    def test_largest_remainder_tie_breaks_low_index(self):
        # Quotas are all 4/3: floors (1,1,1), one leftover seat goes to
        # the lowest index among the equal remainders.
        assert scale_fleet((3, 3, 3), 4) == [2, 1, 1]

    def test_zero_distribution_rejected_for_positive_target(self):
        with pytest.raises(InvalidInputError):
            scale_fleet((0, 0), 3)
        assert scale_fleet((0, 0), 0) == [0, 0]

    @settings(max_examples=200, deadline=None)
    @given(
        b0=st.lists(st.integers(min_value=0, max_value=60), min_size=1, max_size=8),
        target=st.integers(min_value=0, max_value=300),
    )
    def test_sums_to_target_and_stays_nonnegative(self, b0, target):
        if sum(b0) == 0:
            return
        scaled = scale_fleet(b0, target)
        assert sum(scaled) == target
        assert all(v >= 0 for v in scaled)
        # proportionality: each entry within one seat of its exact quota
        total = sum(b0)
        for v, orig in zip(scaled, b0):
            assert abs(v - orig * target / total) <= 1.0 + 1e-9


BASE_TARIFF = Tariff(unit_price=1.0, block_minutes=15.0)


class TestFare:
    def test_base_case_block_pricing(self):
        assert fare(14, BASE_TARIFF) == 1.0
        assert fare(15, BASE_TARIFF) == 1.0  # boundary pays one block
        assert fare(16, BASE_TARIFF) == 2.0

    def test_rejects_nonpositive_duration(self):
        with pytest.raises(InvalidInputError):
            fare(0, BASE_TARIFF)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(min_value=0.1, max_value=500.0), st.floats(min_value=0.1, max_value=500.0))
    def test_nondecreasing(self, a, b):
        lo, hi = sorted((a, b))
        assert fare(lo, BASE_TARIFF) <= fare(hi, BASE_TARIFF) + 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=1, max_value=40))
    def test_exact_blocks(self, k):
        assert fare(k * 15, BASE_TARIFF) == pytest.approx(k * 1.0)


class TestInstanceValidation:
    def test_placement_must_sum_to_trike_count(self):
        with pytest.raises(InvalidInputError):
            two_site_relocation().with_(trike_placement=(1, 1))

    def test_docked_initial_stock_over_cap_is_infeasible_by_construction(self):
        with pytest.raises(InfeasibleInstanceError):
            two_site_relocation().with_(mode=Mode.docked([5, 1]))

    def test_demand_diagonal_must_be_zero(self):
        with pytest.raises(InvalidInputError):
            make_instance(
                distances=[[0, 1], [1, 0]],
                num_intervals=2,
                demand_spec=[(0, 0, 0, 1)],
                initial_bikes=(1, 1),
            )

    def test_json_round_trip(self, tmp_path):
        inst = two_site_relocation().with_(
            trike_placement=(0, 1), mode=Mode.docked([4, None])
        )
        path = tmp_path / "inst.json"
        inst.save(path)
        back = Instance.load(path)
        assert back.initial_bikes == inst.initial_bikes
        assert back.trike_placement == inst.trike_placement
        assert back.mode == inst.mode
        assert back.tariff == inst.tariff
        assert back.cost_model == inst.cost_model
        assert np.array_equal(back.demand.counts, inst.demand.counts)
        assert np.array_equal(back.site_graph.distance_km, inst.site_graph.distance_km)
        # byte-stable on re-save
        path2 = tmp_path / "inst2.json"
        back.save(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_non_cent_price_rejected_at_serialization(self, tmp_path):
        inst = two_site_relocation(price=1.0011)
        with pytest.raises(InvalidInputError):
            inst.save(tmp_path / "x.json")


class TestReadTrips:
    def test_malformed_rows_counted_not_fatal(self, tmp_path):
        path = tmp_path / "trips.csv"
        path.write_text(
            "start_iso_time,end_iso_time,start_lat,start_lon,end_lat,end_lon\n"
            "2017-10-18T07:01:00,2017-10-18T07:05:00,1.4,103.82,1.41,103.83\n"
            "not-a-date,2017-10-18T07:05:00,1.4,103.82,1.41,103.83\n"
            "2017-10-18T07:09:00,2017-10-18T07:02:00,1.4,103.82,1.41,103.83\n"
        )
        trips, stats = read_trips(path)
        assert stats.rows_read == 3
        assert stats.malformed == 2  # bad date and end-before-start
        assert len(trips) == 1

    def test_missing_columns_rejected(self, tmp_path):
        path = tmp_path / "trips.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(InvalidInputError):
            read_trips(path)
