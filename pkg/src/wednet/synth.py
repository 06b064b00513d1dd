"""Synthetic weather-coupled city generator for desk-scale experiments.

Flow is periodic (daily/weekly) Poisson traffic; rain arrives as spatially
heterogeneous events and suppresses flow multiplicatively through a
per-parcel coefficient, so weather has a real, localized causal effect that
downstream experiments can try to recover.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from wednet.datamodel import RegionGraph, STTensor, ValidationError
from wednet.ingest import FLOW_SCHEMA, WEATHER_SCHEMA

# Multiplicative suppression never drops below this floor.
SUPPRESSION_FLOOR = 0.1


@dataclass(frozen=True)
class SynthConfig:
    n_parcels: int = 20
    n_days: int = 60
    rain_event_rate: float = 0.5  # events per day
    rain_intensity_range: tuple[float, float] = (0.15, 0.6)  # peak in/hr
    suppression_strength: tuple[float, float] = (0.5, 1.8)  # per-parcel coefficient range
    seed: int = 0
    start: str = "2017-03-01"

    def __post_init__(self) -> None:
        if self.n_parcels < 2:
            raise ValidationError(f"n_parcels must be >= 2, got {self.n_parcels}")
        if self.n_days < 1:
            raise ValidationError(f"n_days must be >= 1, got {self.n_days}")
        if self.rain_event_rate < 0:
            raise ValidationError(f"rain_event_rate must be >= 0, got {self.rain_event_rate}")
        lo, hi = self.rain_intensity_range
        if not (0 < lo <= hi):
            raise ValidationError(f"bad rain_intensity_range {self.rain_intensity_range}")
        lo, hi = self.suppression_strength
        if not (0 <= lo <= hi):
            raise ValidationError(f"bad suppression_strength {self.suppression_strength}")


def _daily_profile(tod: np.ndarray, morning_share: np.ndarray) -> np.ndarray:
    """Two-peak commute profile per parcel; (T,) x (N,) -> (T, N)."""
    morning = np.exp(-0.5 * ((tod - 8.5) / 2.0) ** 2)
    evening = np.exp(-0.5 * ((tod - 18.0) / 2.5) ** 2)
    mix = morning[:, None] * morning_share[None, :] + evening[:, None] * (1.0 - morning_share[None, :])
    return 0.25 + 1.5 * mix


def generate_synthetic(cfg: SynthConfig) -> tuple[RegionGraph, STTensor, STTensor]:
    """Generate (graph, flow, weather) for a synthetic city; deterministic per seed."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_parcels
    n_hours = 24 * cfg.n_days

    lat = 40.70 + 0.12 * rng.random(n)
    lon = -74.02 + 0.12 * rng.random(n)
    parcel_ids = tuple(f"p{i:03d}" for i in range(n))
    graph = RegionGraph.from_centroids(parcel_ids, np.column_stack([lat, lon]))

    time_index = pd.date_range(cfg.start, periods=n_hours, freq="h")
    tod = time_index.hour.to_numpy(dtype=np.float64)
    dow = time_index.dayofweek.to_numpy(dtype=np.int64)

    base = rng.uniform(15.0, 60.0, n)
    morning_share = rng.uniform(0.15, 0.85, n)
    week_factor = np.where(dow >= 5, 0.72, 1.0)
    lam_base = base[None, :] * _daily_profile(tod, morning_share) * week_factor[:, None]

    # Rain events: trapezoidal intensity (2 h ramps) over a random duration
    # with a smooth spatial gradient, so different parcels see different
    # rainfall.  A wind/temperature front leads each event by several hours,
    # giving the weather stream genuinely predictive information that the
    # flow history alone cannot provide.
    precip = np.zeros((n_hours, n))
    front = np.zeros((n_hours, n))
    coord = np.column_stack([lat - lat.mean(), lon - lon.mean()])
    coord = coord / max(coord.std(), 1e-9)
    n_events = rng.poisson(cfg.rain_event_rate * cfg.n_days)
    for _ in range(n_events):
        start_h = int(rng.integers(0, n_hours))
        duration = int(rng.integers(8, 28))
        lead = int(rng.integers(4, 9))
        peak = rng.uniform(*cfg.rain_intensity_range)
        theta = rng.uniform(0.0, 2.0 * np.pi)
        offset = rng.normal(0.0, 0.5)
        u = coord @ np.array([np.cos(theta), np.sin(theta)])
        spatial = 0.3 + 0.7 / (1.0 + np.exp(-2.0 * (u - offset)))
        for k in range(duration):
            t = start_h + k
            if t >= n_hours:
                break
            shape = min(1.0, (k + 1) / 2.0, (duration - k) / 2.0)
            precip[t] += peak * shape * spatial
        for k in range(-lead, duration):
            t = start_h + k
            if t < 0 or t >= n_hours:
                continue
            ramp = min(1.0, (k + lead + 1) / lead) if k < 0 else max(0.2, (duration - k) / duration)
            front[t] += peak * ramp * spatial

    k_sup = rng.uniform(*cfg.suppression_strength, n)
    factor = np.clip(1.0 - k_sup[None, :] * precip, SUPPRESSION_FLOOR, 1.0)
    lam = lam_base * factor

    pickups = rng.poisson(lam).astype(np.float64)
    lam_drop = 0.6 * lam + 0.4 * lam.mean(axis=1, keepdims=True)
    dropoffs = rng.poisson(lam_drop).astype(np.float64)
    flow_vals = np.stack([pickups, dropoffs], axis=-1)

    temp = (
        55.0
        + 10.0 * np.cos(2.0 * np.pi * (tod[:, None] - 15.0) / 24.0)
        - 9.0 * (1.0 - np.exp(-2.5 * front))
        + rng.normal(0.0, 1.0, (n_hours, n))
    )
    wind = np.maximum(
        0.0,
        6.0 + 14.0 * (1.0 - np.exp(-2.0 * front)) + rng.normal(0.0, 1.2, (n_hours, n)),
    )
    weather_vals = np.stack([precip, temp, wind], axis=-1)

    flow = STTensor(flow_vals.astype(np.float32), FLOW_SCHEMA, time_index)
    weather = STTensor(weather_vals.astype(np.float32), WEATHER_SCHEMA, time_index)
    return graph, flow, weather
