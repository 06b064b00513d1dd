import numpy as np
import pandas as pd
import pytest

from wednet.datamodel import RegionGraph, STTensor, SampleWindow, label_condition
from wednet.ingest import FLOW_SCHEMA, WEATHER_SCHEMA


@pytest.fixture
def square_graph() -> RegionGraph:
    """Four parcels on a ~1 km square."""
    ids = ("a", "b", "c", "d")
    cent = np.array(
        [
            [40.750, -73.980],
            [40.759, -73.980],
            [40.750, -73.968],
            [40.759, -73.968],
        ]
    )
    return RegionGraph.from_centroids(ids, cent)


def make_sttensor(values: np.ndarray, schema, start="2017-03-01") -> STTensor:
    idx = pd.date_range(start, periods=values.shape[0], freq="h")
    return STTensor(values.astype(np.float32), schema, idx)


def make_window(
    flow_hist: np.ndarray,
    weather_hist: np.ndarray,
    flow_future: np.ndarray,
    start="2017-03-01 00:00",
    precip_feature: int = 0,
) -> SampleWindow:
    start = pd.Timestamp(start)
    t = flow_hist.shape[0]
    idx = pd.date_range(start, periods=t, freq="h")
    return SampleWindow(
        flow_hist=flow_hist,
        weather_hist=weather_hist,
        flow_future=flow_future,
        start_time=start,
        time_of_day=idx.hour.to_numpy(dtype=np.int16),
        day_of_week=idx.dayofweek.to_numpy(dtype=np.int16),
        condition=label_condition(weather_hist[:, :, precip_feature]),
    )


def random_window(rng: np.random.Generator, t=12, n=4, horizon=12, rainy=False, start="2017-03-01 00:00"):
    flow_hist = rng.poisson(20.0, (t, n, len(FLOW_SCHEMA))).astype(np.float32)
    weather = np.zeros((t, n, len(WEATHER_SCHEMA)), dtype=np.float32)
    weather[:, :, 0] = rng.uniform(0.15, 0.5, (t, n)) if rainy else 0.0
    weather[:, :, 1] = rng.uniform(40, 70, (t, n))
    weather[:, :, 2] = rng.uniform(0, 15, (t, n))
    future = rng.poisson(20.0, (horizon, n, len(FLOW_SCHEMA))).astype(np.float32)
    return make_window(flow_hist, weather, future, start=start)
