"""Attention-driven causal identification and intervention for augmentation.

Spatial and temporal attention maps from a pre-trained model rank which
parcels and steps influence each target; the top proportion is kept as
causal, everything else may be overwritten from a calendar-matched
normal-condition reference to synthesize extra extreme-condition samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from wednet.datamodel import SampleWindow, ValidationError, label_condition
from wednet.encoders import AttentionBundle


class NoReferenceMatch(ValueError):
    """No normal-condition sample shares the required day type and hour."""

    def __init__(self, day_type: str, hour: int) -> None:
        super().__init__(f"no normal reference matches day_type={day_type!r}, hour={hour}")
        self.day_type = day_type
        self.hour = hour


def top_indices(scores: np.ndarray, k: int) -> frozenset[int]:
    """Indices of the k largest scores; ties resolved to the lower index."""
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    return frozenset(int(i) for i in order[:k])


def bottom_indices(scores: np.ndarray, k: int) -> frozenset[int]:
    """Indices of the k smallest scores; ties resolved to the lower index."""
    order = np.argsort(np.asarray(scores, dtype=np.float64), kind="stable")
    return frozenset(int(i) for i in order[:k])


@dataclass(frozen=True)
class SpatialSelection:
    per_parcel_flow: Mapping[int, frozenset[int]]
    per_parcel_weather: Mapping[int, frozenset[int]]
    per_parcel: Mapping[int, frozenset[int]]  # union of the two
    causal_parcels: frozenset[int]
    n_parcels: int

    @property
    def noncausal_parcels(self) -> frozenset[int]:
        return frozenset(range(self.n_parcels)) - self.causal_parcels


@dataclass(frozen=True)
class TemporalSelection:
    per_step_flow: Mapping[int, frozenset[int]]
    per_step_weather: Mapping[int, frozenset[int]]
    per_step: Mapping[int, frozenset[int]]  # union, window-expanded
    causal_steps: frozenset[int]
    n_steps: int

    @property
    def noncausal_steps(self) -> frozenset[int]:
        return frozenset(range(self.n_steps)) - self.causal_steps


def _check_proportion(r_a: float) -> None:
    if not (0.0 < r_a <= 1.0):
        raise ValidationError(f"causal proportion must lie in (0, 1], got {r_a}")


def identify_spatial(
    self_spatial: np.ndarray,
    cross_spatial: np.ndarray,
    r_a: float,
) -> SpatialSelection:
    """Select causal source parcels per target from spatial attention maps.

    The influence of source j on target i is the time-averaged attention
    weight map[:, i, j].  Each target keeps the top ceil(r_a * N) sources per
    map; the global causal set is the union over targets.  When that union
    covers every parcel, the floor((1 - r_a) * N) parcels with the lowest
    aggregate score are re-marked non-causal so an intervention region exists.
    """
    _check_proportion(r_a)
    s_f = np.asarray(self_spatial, dtype=np.float64).mean(axis=0)  # (target, source)
    s_w = np.asarray(cross_spatial, dtype=np.float64).mean(axis=0)
    if s_f.shape != s_w.shape or s_f.shape[0] != s_f.shape[1]:
        raise ValidationError(f"spatial maps disagree: {s_f.shape} vs {s_w.shape}")
    n = s_f.shape[0]
    k = math.ceil(r_a * n)
    per_flow = {i: top_indices(s_f[i], k) for i in range(n)}
    per_weather = {i: top_indices(s_w[i], k) for i in range(n)}
    per_union = {i: per_flow[i] | per_weather[i] for i in range(n)}
    causal = frozenset().union(*per_union.values())
    if len(causal) == n:
        n_noncausal = n - k
        aggregate = s_f.sum(axis=0) + s_w.sum(axis=0)
        causal = frozenset(range(n)) - bottom_indices(aggregate, n_noncausal)
    return SpatialSelection(per_flow, per_weather, per_union, causal, n)


def _expand_window(steps: frozenset[int], w: int, n_steps: int) -> frozenset[int]:
    out = set()
    for s in steps:
        out.update(range(max(0, s - w), min(n_steps, s + w + 1)))
    return frozenset(out)


def identify_temporal(
    self_temporal: np.ndarray,
    cross_temporal: np.ndarray,
    r_a: float,
    window_w: int = 1,
) -> TemporalSelection:
    """Select causal source steps from temporal attention maps.

    The influence of source step tau on query step t is the parcel-averaged
    weight map[:, t, tau].  Per-step selections take the top ceil(r_a * T)
    sources per map, expanded by +/- window_w for short-term continuity; the
    global causal set ranks steps by score summed over all query steps and
    expands the top proportion the same way.
    """
    _check_proportion(r_a)
    if window_w < 0:
        raise ValidationError(f"temporal window must be >= 0, got {window_w}")
    s_f = np.asarray(self_temporal, dtype=np.float64).mean(axis=0)  # (query, source)
    s_w = np.asarray(cross_temporal, dtype=np.float64).mean(axis=0)
    if s_f.shape != s_w.shape or s_f.shape[0] != s_f.shape[1]:
        raise ValidationError(f"temporal maps disagree: {s_f.shape} vs {s_w.shape}")
    t = s_f.shape[0]
    k = math.ceil(r_a * t)
    per_flow = {i: top_indices(s_f[i], k) for i in range(t)}
    per_weather = {i: top_indices(s_w[i], k) for i in range(t)}
    per_union = {
        i: _expand_window(per_flow[i] | per_weather[i], window_w, t) for i in range(t)
    }
    aggregate = s_f.sum(axis=0) + s_w.sum(axis=0)
    causal = _expand_window(top_indices(aggregate, k), window_w, t)
    return TemporalSelection(per_flow, per_weather, per_union, causal, t)


@dataclass(frozen=True)
class CausalMask:
    """Causal/non-causal coordinate sets for one sample's intervention."""

    n_parcels: int
    n_steps: int
    causal_parcels: frozenset[int]
    causal_steps: frozenset[int]
    per_parcel_neighbors: Mapping[int, frozenset[int]]
    per_step_sources: Mapping[int, frozenset[int]]
    r_a: float
    window_w: int

    @property
    def noncausal_parcels(self) -> frozenset[int]:
        return frozenset(range(self.n_parcels)) - self.causal_parcels

    @property
    def noncausal_steps(self) -> frozenset[int]:
        return frozenset(range(self.n_steps)) - self.causal_steps

    def replacement_grid(self) -> np.ndarray:
        """Boolean (steps, parcels) grid of coordinates the intervention overwrites."""
        step_nc = np.zeros(self.n_steps, dtype=bool)
        step_nc[list(self.noncausal_steps)] = True
        parcel_nc = np.zeros(self.n_parcels, dtype=bool)
        parcel_nc[list(self.noncausal_parcels)] = True
        return step_nc[:, None] | parcel_nc[None, :]


def build_mask(bundle: AttentionBundle, r_a: float, window_w: int = 1) -> CausalMask:
    """Combine spatial and temporal identification into one intervention mask."""
    if bundle.cross_spatial is None or bundle.cross_temporal is None:
        raise ValidationError("causal identification needs cross-attention maps (full model)")
    spatial = identify_spatial(bundle.self_spatial, bundle.cross_spatial, r_a)
    temporal = identify_temporal(bundle.self_temporal, bundle.cross_temporal, r_a, window_w)
    return CausalMask(
        n_parcels=spatial.n_parcels,
        n_steps=temporal.n_steps,
        causal_parcels=spatial.causal_parcels,
        causal_steps=temporal.causal_steps,
        per_parcel_neighbors=spatial.per_parcel,
        per_step_sources=temporal.per_step,
        r_a=r_a,
        window_w=window_w,
    )


def select_reference(
    extreme: SampleWindow,
    pool: Sequence[SampleWindow],
    rng: np.random.Generator,
) -> SampleWindow:
    """Pick a random normal sample matching day type and start hour exactly."""
    if not pool:
        raise NoReferenceMatch("weekend" if extreme.is_weekend else "weekday", extreme.start_hour)
    matches = [
        w
        for w in pool
        if w.is_weekend == extreme.is_weekend and w.start_hour == extreme.start_hour
    ]
    if not matches:
        raise NoReferenceMatch("weekend" if extreme.is_weekend else "weekday", extreme.start_hour)
    return matches[int(rng.integers(len(matches)))]


def intervene(
    extreme: SampleWindow,
    reference: SampleWindow,
    mask: CausalMask,
    precip_feature: int = 0,
) -> SampleWindow:
    """Overwrite non-causal history coordinates with the reference's values.

    Causal coordinates and the future target stay bit-identical to the
    extreme sample; the condition label is recomputed from the resulting
    precipitation history.
    """
    if extreme.flow_hist.shape != reference.flow_hist.shape:
        raise ValidationError("extreme and reference flow histories differ in shape")
    if extreme.weather_hist.shape != reference.weather_hist.shape:
        raise ValidationError("extreme and reference weather histories differ in shape")
    if mask.n_steps != extreme.hist_len or mask.n_parcels != extreme.n_parcels:
        raise ValidationError(
            f"mask for ({mask.n_steps}, {mask.n_parcels}) does not fit window"
            f" ({extreme.hist_len}, {extreme.n_parcels})"
        )
    grid = mask.replacement_grid()[:, :, None]
    flow = np.where(grid, reference.flow_hist, extreme.flow_hist)
    weather = np.where(grid, reference.weather_hist, extreme.weather_hist)
    condition = label_condition(weather[:, :, precip_feature])
    return SampleWindow(
        flow_hist=flow,
        weather_hist=weather,
        flow_future=extreme.flow_future,
        start_time=extreme.start_time,
        time_of_day=extreme.time_of_day,
        day_of_week=extreme.day_of_week,
        condition=condition,
        sample_id=f"{extreme.sample_id}+aug",
    )


@dataclass(frozen=True)
class AugmentedSample:
    base_id: str
    reference_id: str
    mask: CausalMask
    result: SampleWindow


@dataclass
class AugmentReport:
    n_base: int
    n_extreme: int
    n_matchable: int
    n_augmented: int
    multiplier: int
    r_a: float
    window_w: int
    seed: int
    skipped: list[dict] = field(default_factory=list)
    provenance: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_base": self.n_base,
            "n_extreme": self.n_extreme,
            "n_matchable": self.n_matchable,
            "n_augmented": self.n_augmented,
            "multiplier": self.multiplier,
            "r_a": self.r_a,
            "window_w": self.window_w,
            "seed": self.seed,
            "skipped": self.skipped,
            "provenance": self.provenance,
        }


def augment_dataset(
    windows: Sequence[SampleWindow],
    attention_fn: Callable[[SampleWindow], AttentionBundle],
    multiplier: int = 2,
    r_a: float = 0.2,
    window_w: int = 1,
    seed: int = 0,
    precip_feature: int = 0,
) -> tuple[list[SampleWindow], AugmentReport]:
    """Expand a training set with intervened copies of extreme samples.

    Each extreme sample gets its own mask from its own attention maps, then
    ``multiplier`` references drawn from matching normal samples (without
    replacement when the pool allows).  Unmatchable extremes are skipped and
    recorded.  Per-sample RNG streams derive from (seed, sample index) so the
    output is order- and parallelism-independent.
    """
    if multiplier < 0:
        raise ValidationError(f"multiplier must be >= 0, got {multiplier}")
    _check_proportion(r_a)
    base = list(windows)
    normals = [w for w in base if not w.condition.is_extreme]
    report = AugmentReport(
        n_base=len(base),
        n_extreme=sum(w.condition.is_extreme for w in base),
        n_matchable=0,
        n_augmented=0,
        multiplier=multiplier,
        r_a=r_a,
        window_w=window_w,
        seed=seed,
    )
    augmented: list[SampleWindow] = []
    for idx, window in enumerate(base):
        if not window.condition.is_extreme:
            continue
        rng = np.random.default_rng([seed, idx])
        matches = [
            w
            for w in normals
            if w.is_weekend == window.is_weekend and w.start_hour == window.start_hour
        ]
        if not matches:
            report.skipped.append(
                {
                    "sample_id": window.sample_id,
                    "day_type": "weekend" if window.is_weekend else "weekday",
                    "hour": window.start_hour,
                }
            )
            continue
        report.n_matchable += 1
        if multiplier == 0:
            continue
        mask = build_mask(attention_fn(window), r_a, window_w)
        picks = rng.choice(len(matches), size=multiplier, replace=len(matches) < multiplier)
        for pick in picks:
            reference = matches[int(pick)]
            result = intervene(window, reference, mask, precip_feature)
            augmented.append(result)
            report.provenance.append(
                {
                    "base_id": window.sample_id,
                    "reference_id": reference.sample_id,
                    "causal_parcels": sorted(mask.causal_parcels),
                    "causal_steps": sorted(mask.causal_steps),
                    "result_condition": result.condition.value,
                }
            )
    report.n_augmented = len(augmented)
    return base + augmented, report
