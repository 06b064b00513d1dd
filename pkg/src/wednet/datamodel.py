"""Core domain types: region graph, spatio-temporal tensors, sample windows.

Everything here is immutable after construction (arrays are marked
read-only) so windows can be processed in parallel without locking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

EARTH_RADIUS_M = 6_371_000.0

# Mean hourly precipitation (in/hr) strictly above this marks a sample as
# extreme.  The comparison happens at float32 resolution because tensor
# payloads are float32: an array filled with float32(0.1) must stay "normal".
EXTREME_PRECIP_THRESHOLD = 0.1

CONDITION_NORMAL = "normal"
CONDITION_EXTREME = "extreme"
CONDITION_CLASSES = (CONDITION_NORMAL, CONDITION_EXTREME)

DEFAULT_ADJACENCY_M = 2_000.0


class ValidationError(ValueError):
    """A precondition or invariant was violated by caller-supplied data."""


class NumericalError(RuntimeError):
    """Non-finite values appeared where finite numbers are required."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def haversine_m(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Great-circle distance in meters between (lat, lon) points in degrees."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(x, dtype=np.float64)) for x in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


@dataclass(frozen=True)
class RegionGraph:
    """Land parcels with centroids, pairwise distances, and adjacency edges.

    ``distances`` is the N x N symmetric matrix of geographic distances in
    meters; ``edges`` connect parcels closer than the adjacency threshold.
    The model never consumes edges (attention is fully learned); they exist
    for visualization.
    """

    parcel_ids: tuple[str, ...]
    centroids: np.ndarray  # (N, 2) as (lat, lon) degrees
    distances: np.ndarray  # (N, N) meters
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        n = len(self.parcel_ids)
        if n < 2:
            raise ValidationError(f"need at least 2 parcels, got {n}")
        if len(set(self.parcel_ids)) != n:
            raise ValidationError("parcel_ids must be unique")
        cent = np.asarray(self.centroids, dtype=np.float64)
        if cent.shape != (n, 2):
            raise ValidationError(f"centroids shape {cent.shape} != ({n}, 2)")
        dist = np.asarray(self.distances, dtype=np.float64)
        if dist.shape != (n, n):
            raise ValidationError(f"distances shape {dist.shape} != ({n}, {n})")
        if not np.allclose(np.diag(dist), 0.0):
            raise ValidationError("distance matrix must have zero diagonal")
        if not np.allclose(dist, dist.T, rtol=1e-9, atol=1e-6):
            raise ValidationError("distance matrix must be symmetric")
        object.__setattr__(self, "parcel_ids", tuple(str(p) for p in self.parcel_ids))
        object.__setattr__(self, "centroids", _freeze(cent))
        object.__setattr__(self, "distances", _freeze(dist))
        object.__setattr__(self, "edges", tuple((int(i), int(j)) for i, j in self.edges))

    @property
    def n_parcels(self) -> int:
        return len(self.parcel_ids)

    def index_of(self, parcel_id: str) -> int:
        try:
            return self.parcel_ids.index(parcel_id)
        except ValueError:
            raise ValidationError(f"unknown parcel id {parcel_id!r}") from None

    @classmethod
    def from_centroids(
        cls,
        parcel_ids: Sequence[str],
        centroids: np.ndarray,
        distances: np.ndarray | None = None,
        adjacency_m: float = DEFAULT_ADJACENCY_M,
    ) -> "RegionGraph":
        cent = np.asarray(centroids, dtype=np.float64)
        if distances is None:
            lat = cent[:, 0]
            lon = cent[:, 1]
            distances = haversine_m(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
            np.fill_diagonal(distances, 0.0)
        dist = np.asarray(distances, dtype=np.float64)
        iu, ju = np.triu_indices(len(parcel_ids), k=1)
        close = dist[iu, ju] <= adjacency_m
        edges = tuple(zip(iu[close].tolist(), ju[close].tolist()))
        return cls(tuple(parcel_ids), cent, dist, edges)


def feature_name(entry: str) -> str:
    """Strip a trailing ``[unit]`` annotation from a schema entry."""
    return entry.split(" [", 1)[0].strip()


@dataclass(frozen=True)
class STTensor:
    """A (time x parcels x features) dense array with schema and time index."""

    values: np.ndarray  # (T, N, d) float32, finite
    feature_schema: tuple[str, ...]
    time_index: pd.DatetimeIndex

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float32)
        if vals.ndim != 3:
            raise ValidationError(f"values must be 3-d (T, N, d), got shape {vals.shape}")
        if not np.isfinite(vals).all():
            t, n, f = np.argwhere(~np.isfinite(vals))[0]
            raise ValidationError(f"non-finite value at [t={t}, parcel={n}, feature={f}]")
        idx = pd.DatetimeIndex(self.time_index)
        if len(idx) != vals.shape[0]:
            raise ValidationError(f"time_index length {len(idx)} != T {vals.shape[0]}")
        if len(self.feature_schema) != vals.shape[2]:
            raise ValidationError(
                f"feature_schema length {len(self.feature_schema)} != d {vals.shape[2]}"
            )
        object.__setattr__(self, "values", _freeze(vals))
        object.__setattr__(self, "feature_schema", tuple(self.feature_schema))
        object.__setattr__(self, "time_index", idx)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_parcels(self) -> int:
        return self.values.shape[1]

    @property
    def n_features(self) -> int:
        return self.values.shape[2]

    def feature_index(self, name: str) -> int:
        names = [feature_name(e) for e in self.feature_schema]
        try:
            return names.index(name)
        except ValueError:
            raise ValidationError(f"feature {name!r} not in schema {self.feature_schema}") from None


@dataclass(frozen=True)
class ConditionLabel:
    """Weather condition of a sample window, derived from mean precipitation."""

    value: str
    mean_precip: float

    def __post_init__(self) -> None:
        if self.value not in CONDITION_CLASSES:
            raise ValidationError(f"condition must be one of {CONDITION_CLASSES}, got {self.value!r}")

    @property
    def is_extreme(self) -> bool:
        return self.value == CONDITION_EXTREME

    @property
    def class_index(self) -> int:
        return CONDITION_CLASSES.index(self.value)


def label_condition(precip: np.ndarray) -> ConditionLabel:
    """Label a history window from its T x N precipitation slice (in/hr).

    Extreme iff the mean is strictly above the threshold; the boundary value
    itself is normal.  Compared at float32 resolution (see module docs).
    """
    arr = np.asarray(precip)
    if arr.ndim != 2:
        raise ValidationError(f"precipitation slice must be 2-d (T, N), got shape {arr.shape}")
    bad = ~np.isfinite(arr) | (arr < 0)
    if bad.any():
        t, n = np.argwhere(bad)[0]
        raise ValidationError(f"invalid precipitation {arr[t, n]!r} at [t={t}, parcel={n}]")
    mean = float(arr.mean(dtype=np.float64))
    extreme = np.float32(mean) > np.float32(EXTREME_PRECIP_THRESHOLD)
    return ConditionLabel(CONDITION_EXTREME if extreme else CONDITION_NORMAL, mean)


@dataclass(frozen=True)
class SampleWindow:
    """One training/eval example: history (flow + weather) and future flow."""

    flow_hist: np.ndarray  # (T, N, d_f) float32
    weather_hist: np.ndarray  # (T, N, d_m) float32
    flow_future: np.ndarray  # (T', N, d_f) float32
    start_time: pd.Timestamp
    time_of_day: np.ndarray  # (T,) int16, hourly slot 0..23
    day_of_week: np.ndarray  # (T,) int16, Monday=0 .. Sunday=6
    condition: ConditionLabel
    sample_id: str = ""

    def __post_init__(self) -> None:
        fh = np.asarray(self.flow_hist, dtype=np.float32)
        wh = np.asarray(self.weather_hist, dtype=np.float32)
        ff = np.asarray(self.flow_future, dtype=np.float32)
        if fh.ndim != 3 or wh.ndim != 3 or ff.ndim != 3:
            raise ValidationError("window tensors must be 3-d (steps, parcels, features)")
        if fh.shape[1] != wh.shape[1] or fh.shape[1] != ff.shape[1]:
            raise ValidationError("history and future must share the parcel axis")
        if fh.shape[0] != wh.shape[0]:
            raise ValidationError("flow and weather history must share the time axis")
        tod = np.asarray(self.time_of_day, dtype=np.int16)
        dow = np.asarray(self.day_of_week, dtype=np.int16)
        if tod.shape != (fh.shape[0],) or dow.shape != (fh.shape[0],):
            raise ValidationError("calendar arrays must have one entry per history step")
        if tod.min(initial=0) < 0 or tod.max(initial=0) > 23:
            raise ValidationError("time_of_day entries must lie in 0..23")
        if dow.min(initial=0) < 0 or dow.max(initial=0) > 6:
            raise ValidationError("day_of_week entries must lie in 0..6")
        object.__setattr__(self, "flow_hist", _freeze(fh))
        object.__setattr__(self, "weather_hist", _freeze(wh))
        object.__setattr__(self, "flow_future", _freeze(ff))
        object.__setattr__(self, "time_of_day", _freeze(tod))
        object.__setattr__(self, "day_of_week", _freeze(dow))
        object.__setattr__(self, "start_time", pd.Timestamp(self.start_time))
        if not self.sample_id:
            object.__setattr__(self, "sample_id", self.start_time.isoformat())

    @property
    def hist_len(self) -> int:
        return self.flow_hist.shape[0]

    @property
    def horizon(self) -> int:
        return self.flow_future.shape[0]

    @property
    def n_parcels(self) -> int:
        return self.flow_hist.shape[1]

    @property
    def is_weekend(self) -> bool:
        return int(self.day_of_week[0]) >= 5

    @property
    def start_hour(self) -> int:
        return int(self.time_of_day[0])


@dataclass(frozen=True)
class Split:
    train: tuple[SampleWindow, ...]
    valid: tuple[SampleWindow, ...]
    test: tuple[SampleWindow, ...]

    def __iter__(self):
        return iter((self.train, self.valid, self.test))


def chronological_split(
    windows: Sequence[SampleWindow],
    ratios: tuple[float, float, float] = (0.5, 0.25, 0.25),
) -> Split:
    """Partition time-ordered windows into contiguous train/valid/test runs.

    Sizes are floor(r0*n), floor(r1*n), and the remainder, preserving order.
    """
    n = len(windows)
    if n < 4:
        raise ValidationError(f"need at least 4 windows to split, got {n}")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"ratios must be three values summing to 1, got {ratios}")
    if any(r <= 0 for r in ratios):
        raise ValidationError(f"ratios must be positive, got {ratios}")
    times = [w.start_time for w in windows]
    for k in range(1, n):
        if times[k] < times[k - 1]:
            raise ValidationError(
                f"windows not sorted by start_time at position {k}: {times[k]} < {times[k - 1]}"
            )
    n_train = int(np.floor(ratios[0] * n))
    n_valid = int(np.floor(ratios[1] * n))
    train = tuple(windows[:n_train])
    valid = tuple(windows[n_train : n_train + n_valid])
    test = tuple(windows[n_train + n_valid :])
    return Split(train, valid, test)


def partition_by_condition(
    windows: Sequence[SampleWindow],
) -> dict[str, tuple[SampleWindow, ...]]:
    """Group windows by condition label, for per-condition reporting."""
    out: dict[str, list[SampleWindow]] = {c: [] for c in CONDITION_CLASSES}
    for w in windows:
        out[w.condition.value].append(w)
    return {c: tuple(ws) for c, ws in out.items()}
