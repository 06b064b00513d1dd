import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wednet.datamodel import (
    CONDITION_EXTREME,
    CONDITION_NORMAL,
    RegionGraph,
    STTensor,
    ValidationError,
    chronological_split,
    label_condition,
)

from conftest import random_window


class TestLabelCondition:
    def test_all_zero_is_normal(self):
        label = label_condition(np.zeros((12, 5), dtype=np.float32))
        assert label.value == CONDITION_NORMAL
        assert label.mean_precip == 0.0

    def test_above_threshold_is_extreme(self):
        label = label_condition(np.full((12, 5), 0.2, dtype=np.float32))
        assert label.value == CONDITION_EXTREME
        assert label.mean_precip == pytest.approx(0.2)

    def test_boundary_exactly_threshold_is_normal(self):
        # strict inequality: a window sitting exactly on the threshold stays normal
        label = label_condition(np.full((12, 5), 0.1, dtype=np.float32))
        assert label.value == CONDITION_NORMAL

    def test_negative_entry_names_offender(self):
        precip = np.zeros((3, 4), dtype=np.float32)
        precip[2, 1] = -0.5
        with pytest.raises(ValidationError, match=r"t=2.*parcel=1"):
            label_condition(precip)

    def test_nan_entry_rejected(self):
        precip = np.zeros((3, 4))
        precip[0, 0] = np.nan
        with pytest.raises(ValidationError):
            label_condition(precip)

    @given(
        base=st.floats(0.0, 0.5),
        bump=st.floats(0.0, 5.0),
        t=st.integers(0, 3),
        n=st.integers(0, 2),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_every_entry(self, base, bump, t, n):
        precip = np.full((4, 3), base, dtype=np.float64)
        before = label_condition(precip)
        precip[t, n] += bump
        after = label_condition(precip)
        if before.value == CONDITION_EXTREME:
            assert after.value == CONDITION_EXTREME


class TestChronologicalSplit:
    def _windows(self, n):
        rng = np.random.default_rng(0)
        start = pd.Timestamp("2017-03-01")
        return [
            random_window(rng, start=start + pd.Timedelta(hours=k)) for k in range(n)
        ]

    def test_exact_ratio(self):
        split = chronological_split(self._windows(100))
        assert (len(split.train), len(split.valid), len(split.test)) == (50, 25, 25)

    def test_floor_arithmetic(self):
        # floor(0.5 * 10), floor(0.25 * 10), remainder
        split = chronological_split(self._windows(10))
        assert (len(split.train), len(split.valid), len(split.test)) == (5, 2, 3)

    def test_partition_complete_and_ordered(self):
        windows = self._windows(31)
        split = chronological_split(windows)
        assert len(split.train) + len(split.valid) + len(split.test) == 31
        assert max(w.start_time for w in split.train) < min(w.start_time for w in split.valid)
        assert max(w.start_time for w in split.valid) < min(w.start_time for w in split.test)
        seen = {id(w) for part in split for w in part}
        assert len(seen) == 31

    def test_unsorted_rejected(self):
        windows = self._windows(6)
        windows[2], windows[3] = windows[3], windows[2]
        with pytest.raises(ValidationError, match="not sorted"):
            chronological_split(windows)

    def test_too_few_rejected(self):
        with pytest.raises(ValidationError):
            chronological_split(self._windows(3))

    @given(n=st.integers(4, 200))
    @settings(max_examples=30, deadline=None)
    def test_sizes_always_sum(self, n):
        split = chronological_split(self._windows(n))
        assert len(split.train) + len(split.valid) + len(split.test) == n
        assert len(split.train) == n // 2


class TestRegionGraph:
    def test_distances_symmetric_zero_diag(self, square_graph):
        d = square_graph.distances
        assert np.allclose(d, d.T)
        assert np.allclose(np.diag(d), 0.0)
        assert d[0, 1] == pytest.approx(1000, rel=0.01)  # ~1 km grid spacing

    def test_edges_within_threshold(self, square_graph):
        assert (0, 1) in square_graph.edges
        for i, j in square_graph.edges:
            assert square_graph.distances[i, j] <= 2000.0

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValidationError, match="unique"):
            RegionGraph.from_centroids(("a", "a"), np.zeros((2, 2)))

    def test_single_parcel_rejected(self):
        with pytest.raises(ValidationError):
            RegionGraph.from_centroids(("a",), np.zeros((1, 2)))


class TestSTTensor:
    def test_nan_rejected(self):
        vals = np.zeros((2, 2, 1), dtype=np.float32)
        vals[1, 0, 0] = np.inf
        with pytest.raises(ValidationError, match="non-finite"):
            STTensor(vals, ("x",), pd.date_range("2017-03-01", periods=2, freq="h"))

    def test_schema_length_enforced(self):
        with pytest.raises(ValidationError):
            STTensor(
                np.zeros((2, 2, 2), dtype=np.float32),
                ("only_one",),
                pd.date_range("2017-03-01", periods=2, freq="h"),
            )

    def test_feature_index_strips_units(self):
        st_ = STTensor(
            np.zeros((1, 1, 2), dtype=np.float32),
            ("precip [in/hr]", "temp [degF]"),
            pd.date_range("2017-03-01", periods=1, freq="h"),
        )
        assert st_.feature_index("precip") == 0
        assert st_.feature_index("temp") == 1
        with pytest.raises(ValidationError):
            st_.feature_index("wind")

    def test_values_immutable(self):
        st_ = STTensor(
            np.zeros((1, 1, 1), dtype=np.float32),
            ("x",),
            pd.date_range("2017-03-01", periods=1, freq="h"),
        )
        with pytest.raises(ValueError):
            st_.values[0, 0, 0] = 1.0
