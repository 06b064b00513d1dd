import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wednet.datamodel import RegionGraph, ValidationError
from wednet.ingest import (
    FLOW_SCHEMA,
    StationReading,
    TripRecord,
    WEATHER_SCHEMA,
    aggregate_trips,
    idw_interpolate,
    make_windows,
    window_count,
)

from conftest import make_sttensor


def trip(pick, drop, p_from="a", p_to="b"):
    return TripRecord(pd.Timestamp(pick), pd.Timestamp(drop), p_from, p_to)


class TestAggregateTrips:
    def test_direct_count(self, square_graph):
        records = [
            trip("2017-03-01 05:10", "2017-03-01 05:30"),
            trip("2017-03-01 05:40", "2017-03-01 06:05"),
            trip("2017-03-01 05:59", "2017-03-01 06:20"),
        ]
        st_ = aggregate_trips(records, square_graph)
        a = square_graph.index_of("a")
        assert st_.values[0, a, 0] == 3.0  # three pickups in hour 05
        assert st_.values.sum() == 6.0  # 3 pickups + 3 dropoffs total

    def test_hour_boundary_goes_to_starting_bin(self, square_graph):
        records = [trip("2017-03-01 06:00", "2017-03-01 06:00")]
        st_ = aggregate_trips(records, square_graph)
        assert st_.time_index[0] == pd.Timestamp("2017-03-01 06:00")
        assert st_.values[0, square_graph.index_of("a"), 0] == 1.0

    def test_conservation_oracle(self, square_graph):
        rng = np.random.default_rng(42)
        base = pd.Timestamp("2017-03-01")
        ids = square_graph.parcel_ids
        records = []
        for _ in range(1000):
            t0 = base + pd.Timedelta(minutes=int(rng.integers(0, 60 * 72)))
            t1 = t0 + pd.Timedelta(minutes=int(rng.integers(0, 90)))
            records.append(trip(t0, t1, ids[rng.integers(4)], ids[rng.integers(4)]))
        st_ = aggregate_trips(records, square_graph)
        # independent oracle: direct summation over the tensor
        assert st_.values[:, :, 0].sum() == 1000.0
        assert st_.values[:, :, 1].sum() == 1000.0

    def test_unknown_parcel_listed(self, square_graph):
        records = [trip("2017-03-01", "2017-03-01", "zz", "a")]
        with pytest.raises(ValidationError, match="zz"):
            aggregate_trips(records, square_graph)

    def test_empty_rejected(self, square_graph):
        with pytest.raises(ValidationError):
            aggregate_trips([], square_graph)

    def test_out_of_span_rejected(self, square_graph):
        records = [trip("2017-03-01 05:00", "2017-03-01 05:10")]
        span = (pd.Timestamp("2017-03-01 06:00"), pd.Timestamp("2017-03-01 08:00"))
        with pytest.raises(ValidationError, match="outside"):
            aggregate_trips(records, square_graph, span=span)


def station(sid, lat, lon, ts="2017-03-01 00:00", precip=0.0, temp=60.0, wind=5.0):
    return StationReading(sid, lat, lon, pd.Timestamp(ts), precip, temp, wind)


class TestIdwInterpolate:
    def test_single_station_everywhere(self, square_graph):
        readings = [station("s1", 40.80, -73.90, precip=0.3)]
        st_ = idw_interpolate(readings, square_graph)
        assert np.allclose(st_.values[0, :, 0], 0.3)

    def test_equidistant_pair_is_mean(self):
        # parcel midway between two stations on the same latitude
        graph = RegionGraph.from_centroids(
            ("mid", "far"), np.array([[40.75, -73.98], [40.75, -73.90]])
        )
        readings = [
            station("west", 40.75, -73.99, precip=0.0),
            station("east", 40.75, -73.97, precip=0.4),
        ]
        st_ = idw_interpolate(readings, graph)
        # symmetric weights make the float64 mean exactly 0.2 before the
        # float32 cast, so compare at storage precision
        assert abs(st_.values[0, 0, 0] - np.float32(0.2)) <= 1e-9

    def test_hand_computed_weighted_mean(self):
        # station distances 1 km and 2 km, values 10 and 40, power 2:
        # (10 * 1 + 40 * 0.25) / 1.25 = 16.0
        graph = RegionGraph.from_centroids(
            ("target", "other"), np.array([[0.0, 0.0], [0.5, 0.5]])
        )
        km = 1.0 / 111.19492664455873  # one degree of latitude in km
        readings = [
            station("near", km, 0.0, temp=10.0),
            station("far2", -2 * km, 0.0, temp=40.0),
        ]
        st_ = idw_interpolate(readings, graph, power=2.0)
        assert st_.values[0, 0, 1] == pytest.approx(16.0, rel=1e-6)

    def test_coincident_station_exact(self, square_graph):
        lat, lon = square_graph.centroids[2]
        readings = [
            station("here", lat, lon, precip=0.123456),
            station("elsewhere", 40.80, -73.90, precip=0.9),
        ]
        st_ = idw_interpolate(readings, square_graph)
        assert st_.values[0, 2, 0] == np.float32(0.123456)

    def test_gap_fails_without_ffill(self, square_graph):
        readings = [
            station("s1", 40.8, -73.9, ts="2017-03-01 00:00", precip=0.1),
            station("s1", 40.8, -73.9, ts="2017-03-01 02:00", precip=0.3),
        ]
        with pytest.raises(ValidationError, match="01:00"):
            idw_interpolate(readings, square_graph)
        st_ = idw_interpolate(readings, square_graph, ffill=True)
        assert np.allclose(st_.values[1, :, 0], st_.values[0, :, 0])

    def test_convex_combination_bound(self, square_graph):
        rng = np.random.default_rng(3)
        readings = []
        vals = []
        for k in range(5):
            v = float(rng.uniform(0, 1))
            vals.append(v)
            readings.append(station(f"s{k}", 40.7 + 0.02 * k, -74.0 + 0.01 * k, precip=v))
        st_ = idw_interpolate(readings, square_graph)
        assert st_.values[0, :, 0].min() >= min(vals) - 1e-6
        assert st_.values[0, :, 0].max() <= max(vals) + 1e-6

    def test_bad_power_rejected(self, square_graph):
        with pytest.raises(ValidationError):
            idw_interpolate([station("s", 40.8, -73.9)], square_graph, power=0.0)


class TestMakeWindows:
    def _tensors(self, total):
        rng = np.random.default_rng(0)
        flow = make_sttensor(rng.poisson(10, (total, 3, 2)).astype(np.float32), FLOW_SCHEMA)
        weather = make_sttensor(
            np.abs(rng.normal(0.05, 0.05, (total, 3, 3))).astype(np.float32), WEATHER_SCHEMA
        )
        return flow, weather

    def test_boundary_single_window(self):
        flow, weather = self._tensors(24)
        assert len(make_windows(flow, weather)) == 1

    def test_derived_count_48(self):
        flow, weather = self._tensors(48)
        assert len(make_windows(flow, weather)) == 25  # 48 - 24 + 1

    def test_misaligned_rejected(self):
        flow, _ = self._tensors(30)
        _, weather = self._tensors(30)
        weather = make_sttensor(weather.values, WEATHER_SCHEMA, start="2017-03-02")
        with pytest.raises(ValidationError, match="differ"):
            make_windows(flow, weather)

    def test_too_short_rejected(self):
        flow, weather = self._tensors(23)
        with pytest.raises(ValidationError):
            make_windows(flow, weather)

    def test_calendar_fields(self):
        flow, weather = self._tensors(24)
        w = make_windows(flow, weather)[0]
        assert w.time_of_day.tolist() == list(range(12))
        assert w.day_of_week[0] == pd.Timestamp("2017-03-01").dayofweek

    @given(total=st.integers(24, 90), stride=st.integers(1, 5))
    @settings(max_examples=25, deadline=None)
    def test_count_formula_every_stride(self, total, stride):
        flow, weather = self._tensors(total)
        got = len(make_windows(flow, weather, stride=stride))
        assert got == window_count(total, stride=stride)
        assert got == len(range(0, total - 24 + 1, stride))
