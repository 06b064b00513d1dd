"""Ingestion: trip records and station readings into aligned parcel-hour tensors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from wednet.datamodel import (
    RegionGraph,
    SampleWindow,
    STTensor,
    ValidationError,
    haversine_m,
    label_condition,
)

FLOW_SCHEMA = ("pickup_count [trips/hr]", "dropoff_count [trips/hr]")
WEATHER_SCHEMA = ("precip [in/hr]", "temp [degF]", "wind [mph]")

# A parcel closer than this to a station is treated as coincident with it.
COINCIDENT_M = 1.0

DEFAULT_IDW_POWER = 2.0

HOUR = pd.Timedelta(hours=1)


@dataclass(frozen=True)
class TripRecord:
    pickup_ts: pd.Timestamp
    dropoff_ts: pd.Timestamp
    pickup_parcel: str
    dropoff_parcel: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "pickup_ts", pd.Timestamp(self.pickup_ts))
        object.__setattr__(self, "dropoff_ts", pd.Timestamp(self.dropoff_ts))
        if self.pickup_ts > self.dropoff_ts:
            raise ValidationError(
                f"trip pickup {self.pickup_ts} after dropoff {self.dropoff_ts}"
            )


@dataclass(frozen=True)
class StationReading:
    """One hourly observation from a weather station; NaN marks a missing attribute."""

    station_id: str
    lat: float
    lon: float
    ts: pd.Timestamp
    precip: float
    temp: float
    wind: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "ts", pd.Timestamp(self.ts))
        if math.isfinite(self.precip) and self.precip < 0:
            raise ValidationError(f"negative precipitation {self.precip} at station {self.station_id}")

    def attribute(self, index: int) -> float:
        return (self.precip, self.temp, self.wind)[index]


def read_trips_csv(path) -> list[TripRecord]:
    df = pd.read_csv(path, parse_dates=["pickup_ts", "dropoff_ts"])
    return [
        TripRecord(row.pickup_ts, row.dropoff_ts, str(row.pickup_parcel), str(row.dropoff_parcel))
        for row in df.itertuples(index=False)
    ]


def read_stations_csv(path) -> list[StationReading]:
    df = pd.read_csv(path, parse_dates=["ts"])
    out = []
    for row in df.itertuples(index=False):
        out.append(
            StationReading(
                str(row.station_id),
                float(row.lat),
                float(row.lon),
                row.ts,
                float(row.precip) if pd.notna(row.precip) else float("nan"),
                float(row.temp) if pd.notna(row.temp) else float("nan"),
                float(row.wind) if pd.notna(row.wind) else float("nan"),
            )
        )
    return out


def aggregate_trips(
    records: Sequence[TripRecord],
    graph: RegionGraph,
    span: tuple[pd.Timestamp, pd.Timestamp] | None = None,
    interval: pd.Timedelta = HOUR,
) -> STTensor:
    """Count pickups and dropoffs per parcel-hour.

    Bins are half-open ``[h, h + interval)``: an event at exactly an hour
    boundary lands in the bin that starts there.  Hours with no trips are
    explicit zeros, and the total count over the tensor equals the number of
    records for each feature.
    """
    if not records:
        raise ValidationError("no trip records to aggregate")
    known = set(graph.parcel_ids)
    offenders = sorted(
        {r.pickup_parcel for r in records if r.pickup_parcel not in known}
        | {r.dropoff_parcel for r in records if r.dropoff_parcel not in known}
    )
    if offenders:
        raise ValidationError(f"unknown parcel ids in trip records: {offenders}")
    if span is None:
        start = min(r.pickup_ts for r in records).floor("h")
        end = max(r.dropoff_ts for r in records).floor("h") + interval
    else:
        start, end = pd.Timestamp(span[0]), pd.Timestamp(span[1])
    n_bins = int((end - start) / interval)
    if n_bins < 1:
        raise ValidationError(f"empty time span [{start}, {end})")
    index = {p: i for i, p in enumerate(graph.parcel_ids)}
    counts = np.zeros((n_bins, graph.n_parcels, 2), dtype=np.int64)
    for r in records:
        for ts, parcel, feat in ((r.pickup_ts, r.pickup_parcel, 0), (r.dropoff_ts, r.dropoff_parcel, 1)):
            b = int((ts - start) // interval)
            if b < 0 or b >= n_bins:
                raise ValidationError(f"record at {ts} outside declared span [{start}, {end})")
            counts[b, index[parcel], feat] += 1
    time_index = pd.date_range(start, periods=n_bins, freq=interval)
    return STTensor(counts.astype(np.float32), FLOW_SCHEMA, time_index)


def _station_positions(readings: Sequence[StationReading]) -> tuple[list[str], np.ndarray]:
    pos: dict[str, tuple[float, float]] = {}
    for r in readings:
        prev = pos.setdefault(r.station_id, (r.lat, r.lon))
        if prev != (r.lat, r.lon):
            raise ValidationError(f"station {r.station_id} reported from two locations")
    ids = sorted(pos)
    return ids, np.array([pos[s] for s in ids], dtype=np.float64)


def idw_interpolate(
    readings: Sequence[StationReading],
    graph: RegionGraph,
    power: float = DEFAULT_IDW_POWER,
    ffill: bool = False,
) -> STTensor:
    """Inverse-distance weighted interpolation of station readings onto parcels.

    A parcel within ``COINCIDENT_M`` of a station takes that station's value
    exactly.  Hours missing every reading for an attribute raise unless
    ``ffill`` carries the previous hour forward.
    """
    if not readings:
        raise ValidationError("no station readings to interpolate")
    if power <= 0:
        raise ValidationError(f"IDW power must be positive, got {power}")
    station_ids, positions = _station_positions(readings)
    sidx = {s: i for i, s in enumerate(station_ids)}
    start = min(r.ts for r in readings).floor("h")
    end = max(r.ts for r in readings).floor("h")
    time_index = pd.date_range(start, end, freq="h")
    hour_of = {ts: t for t, ts in enumerate(time_index)}

    n_attrs = len(WEATHER_SCHEMA)
    station_vals = np.full((len(time_index), len(station_ids), n_attrs), np.nan)
    counts = np.zeros_like(station_vals)
    for r in readings:
        t = hour_of[r.ts.floor("h")]
        s = sidx[r.station_id]
        for a in range(n_attrs):
            v = r.attribute(a)
            if math.isfinite(v):
                prior = station_vals[t, s, a]
                station_vals[t, s, a] = v if not math.isfinite(prior) else prior + v
                counts[t, s, a] += 1
    multi = counts > 1
    station_vals[multi] /= counts[multi]  # average duplicate readings in an hour

    dist = haversine_m(
        graph.centroids[:, 0:1],
        graph.centroids[:, 1:2],
        positions[None, :, 0],
        positions[None, :, 1],
    )  # (N, S)
    coincident = dist < COINCIDENT_M
    weights = dist.copy()
    weights[coincident] = COINCIDENT_M  # placeholder; coincident parcels bypass weighting
    weights = weights ** (-power)

    out = np.zeros((len(time_index), graph.n_parcels, n_attrs), dtype=np.float64)
    last_row: list[np.ndarray | None] = [None] * n_attrs
    for t in range(len(time_index)):
        for a in range(n_attrs):
            have = np.isfinite(station_vals[t, :, a])
            if not have.any():
                if ffill and last_row[a] is not None:
                    out[t, :, a] = last_row[a]
                    continue
                raise ValidationError(
                    f"no {WEATHER_SCHEMA[a]!r} readings for hour {time_index[t]};"
                    " rerun with forward fill to bridge gaps"
                )
            vals = station_vals[t, have, a]
            w = weights[:, have]
            row = (w * vals).sum(axis=1) / w.sum(axis=1)
            co = coincident[:, have]
            for i in np.flatnonzero(co.any(axis=1)):
                row[i] = vals[np.flatnonzero(co[i])[0]]
            out[t, :, a] = row
            last_row[a] = row
    return STTensor(out.astype(np.float32), WEATHER_SCHEMA, time_index)


def make_windows(
    flow: STTensor,
    weather: STTensor,
    hist_len: int = 12,
    horizon: int = 12,
    stride: int = 1,
) -> list[SampleWindow]:
    """Slice aligned flow/weather tensors into overlapping sample windows."""
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    if len(flow.time_index) != len(weather.time_index) or not (flow.time_index == weather.time_index).all():
        raise ValidationError("flow and weather time indices differ; align before windowing")
    if flow.n_parcels != weather.n_parcels:
        raise ValidationError("flow and weather parcel axes differ")
    total = flow.n_steps
    if total < hist_len + horizon:
        raise ValidationError(
            f"need at least {hist_len + horizon} steps to form one window, got {total}"
        )
    precip = weather.feature_index("precip")
    tod_all = flow.time_index.hour.to_numpy(dtype=np.int16)
    dow_all = flow.time_index.dayofweek.to_numpy(dtype=np.int16)
    windows = []
    for s in range(0, total - hist_len - horizon + 1, stride):
        h_end = s + hist_len
        cond = label_condition(weather.values[s:h_end, :, precip])
        windows.append(
            SampleWindow(
                flow_hist=flow.values[s:h_end],
                weather_hist=weather.values[s:h_end],
                flow_future=flow.values[h_end : h_end + horizon],
                start_time=flow.time_index[s],
                time_of_day=tod_all[s:h_end],
                day_of_week=dow_all[s:h_end],
                condition=cond,
            )
        )
    return windows


def window_count(total: int, hist_len: int = 12, horizon: int = 12, stride: int = 1) -> int:
    """Number of windows produced by make_windows for a given length."""
    if total < hist_len + horizon:
        return 0
    return (total - hist_len - horizon) // stride + 1
