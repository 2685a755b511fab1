"""Space-time lattice construction."""

import itertools
import math

import numpy as np
import pytest

from bikeflow import (
    InvalidInputError,
    Site,
    SiteGraph,
    TimeGrid,
    build_network,
    centroid_distances_km,
    travel_periods,
)


def graph(dist):
    dist = np.asarray(dist, dtype=float)
    return SiteGraph(
        sites=tuple(Site(f"s{i}") for i in range(dist.shape[0])), distance_km=dist
    )


class TestTravelPeriods:
    def test_sub_interval_hop_rounds_up_to_one(self):
        # 0.5 km at 12 km/h is 2.5 min, half of a 5-min interval.
        assert travel_periods(0.5, 12.0, 5) == 1

    def test_exact_interval_is_one(self):
        assert travel_periods(1.0, 12.0, 5) == 1

    def test_twelve_and_a_half_minutes_is_three_periods(self):
        # 2.5 km at 12 km/h = 12.5 min -> ceil(12.5 / 5) = 3
        assert travel_periods(2.5, 12.0, 5) == 3

    @pytest.mark.parametrize("dist,speed,dt", [(0, 10, 5), (-1, 10, 5), (1, 0, 5), (1, 10, 0)])
    def test_rejects_nonpositive_inputs(self, dist, speed, dt):
        with pytest.raises(InvalidInputError):
            travel_periods(dist, speed, dt)


class TestBuildNetwork:
    def test_two_sites_three_points_eight_movement_arcs(self):
        # Both durations are 1 period; departures fit at t in {0, 1}:
        # 2 ride + 2 reloc arcs per departure point = 8 arcs.
        g = graph([[0, 1.0], [1.0, 0]])
        tg = TimeGrid(start_clock_min=0, interval_minutes=5, num_intervals=2)
        net = build_network(g, tg, bike_speed_kmh=12.0, trike_speed_kmh=25.0)
        assert len(net.ride_arcs) + len(net.reloc_arcs) == 8
        assert {t for (_, _, t, _) in net.ride_arcs} == {0, 1}

    def test_single_site_has_no_movement_arcs(self):
        g = graph([[0.0]])
        tg = TimeGrid(start_clock_min=0, interval_minutes=5, num_intervals=4)
        net = build_network(g, tg, 12.0, 25.0)
        assert net.ride_arcs == () and net.reloc_arcs == ()

    def test_horizon_exclusion_leaves_no_arcs(self):
        # 2.5 km at 12 km/h is 3 periods for both classes; T = 2 cannot fit.
        dist = np.full((3, 3), 2.5)
        np.fill_diagonal(dist, 0.0)
        tg = TimeGrid(start_clock_min=0, interval_minutes=5, num_intervals=2)
        net = build_network(graph(dist), tg, 12.0, 12.0)
        assert net.ride_arcs == () and net.reloc_arcs == ()

    def test_arc_set_matches_direct_enumeration(self):
        # Exhaustive cross-check on every lattice with up to 4 sites and
        # 6 intervals: the generated set must equal
        # {(i, j, t, t + tau(i,j)) : i != j, t + tau <= T}.
        patterns = [0.4, 1.3, 2.6, 4.9]
        for n, T in itertools.product(range(1, 5), range(1, 7)):
            dist = np.zeros((n, n))
            for i in range(n):
                for j in range(n):
                    if i != j:
                        dist[i, j] = patterns[(i + 2 * j) % len(patterns)]
            tg = TimeGrid(start_clock_min=0, interval_minutes=5, num_intervals=T)
            net = build_network(graph(dist), tg, 13.0, 21.0)
            for arcs, speed in ((net.ride_arcs, 13.0), (net.reloc_arcs, 21.0)):
                expected = set()
                for i in range(n):
                    for j in range(n):
                        if i == j:
                            continue
                        tau = max(1, math.ceil(dist[i, j] / speed * 60.0 / 5))
                        for t in range(T + 1):
                            if t + tau <= T:
                                expected.add((i, j, t, t + tau))
                assert set(arcs) == expected

    def test_no_zero_duration_and_no_self_loops(self):
        dist = np.array([[0, 0.2, 3.0], [0.2, 0, 1.0], [3.0, 1.0, 0]])
        tg = TimeGrid(start_clock_min=0, interval_minutes=5, num_intervals=5)
        net = build_network(graph(dist), tg, 12.0, 25.0)
        for (i, j, dep, arr) in net.ride_arcs + net.reloc_arcs:
            assert i != j
            assert arr > dep

    def test_deterministic_ordering(self):
        dist = np.array([[0, 0.7, 1.4], [0.7, 0, 0.9], [1.4, 0.9, 0]])
        tg = TimeGrid(start_clock_min=0, interval_minutes=5, num_intervals=4)
        a = build_network(graph(dist), tg, 12.0, 25.0)
        b = build_network(graph(dist), tg, 12.0, 25.0)
        assert a.ride_arcs == b.ride_arcs
        assert a.reloc_arcs == b.reloc_arcs


class TestValidation:
    def test_time_grid_rejects_bad_parameters(self):
        with pytest.raises(InvalidInputError):
            TimeGrid(start_clock_min=0, interval_minutes=0, num_intervals=3)
        with pytest.raises(InvalidInputError):
            TimeGrid(start_clock_min=0, interval_minutes=5, num_intervals=0)

    def test_site_graph_rejects_bad_matrices(self):
        with pytest.raises(InvalidInputError):
            graph([[0.0, 0.0], [1.0, 0.0]])  # zero off-diagonal
        with pytest.raises(InvalidInputError):
            graph([[0.5]])  # nonzero self distance
        with pytest.raises(InvalidInputError):
            SiteGraph(sites=(Site("x"), Site("x")), distance_km=np.eye(2) * 0 + [[0, 1], [1, 0]])

    def test_horizon_arithmetic(self):
        tg = TimeGrid(start_clock_min=420, interval_minutes=5, num_intervals=36)
        assert tg.horizon_minutes == 180
        assert tg.horizon_hours == 3.0
        assert tg.period_of(420) == 0
        assert tg.period_of(423) == 0
        assert tg.period_of(425) == 1
        assert tg.period_of(599.9) == 35
        assert tg.period_of(600) is None
        assert tg.period_of(419) is None

    def test_centroid_distances(self):
        sites = (
            Site("a", lat=1.40, lon=103.82),
            Site("b", lat=1.40, lon=103.8227),  # ~300 m east
        )
        d = centroid_distances_km(sites)
        assert d[0, 0] == 0.0
        assert d[0, 1] == pytest.approx(0.3, rel=0.01)
        assert d[0, 1] == d[1, 0]
