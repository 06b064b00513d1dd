"""JSON + binary container for tensors, window sets, and checkpoints.

A container is a pair of files sharing a stem: ``<stem>.json`` holds the
header (format tag, metadata, and per-array dtype/shape/offset) and
``<stem>.bin`` holds the concatenated little-endian array payloads.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from wednet.datamodel import ConditionLabel, SampleWindow, STTensor, ValidationError

FORMAT_TAG = "wednet-blobs"
FORMAT_VERSION = 1


def _stem(path: str | Path) -> Path:
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p


def save_blobs(path: str | Path, arrays: Mapping[str, np.ndarray], meta: dict | None = None) -> Path:
    """Write named arrays plus metadata; returns the stem path."""
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    entries: dict[str, dict] = {}
    offset = 0
    chunks: list[bytes] = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes()
        entries[name] = {
            "dtype": le.dtype.str,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        }
        chunks.append(raw)
        offset += len(raw)
    header = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "meta": meta or {},
        "arrays": entries,
    }
    stem.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True))
    stem.with_suffix(".bin").write_bytes(b"".join(chunks))
    return stem


def load_blobs(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container back into named arrays and its metadata dict."""
    stem = _stem(path)
    header_path = stem.with_suffix(".json")
    if not header_path.exists():
        raise FileNotFoundError(f"container header not found: {header_path}")
    header = json.loads(header_path.read_text())
    if header.get("format") != FORMAT_TAG:
        raise ValidationError(f"{header_path} is not a {FORMAT_TAG} container")
    payload = stem.with_suffix(".bin").read_bytes()
    arrays: dict[str, np.ndarray] = {}
    for name, entry in header["arrays"].items():
        raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        arrays[name] = arr.copy()
    return arrays, header.get("meta", {})


def save_sttensor(path: str | Path, tensor: STTensor) -> Path:
    """Serialize an STTensor: JSON header + row-major little-endian float32 payload."""
    meta = {
        "kind": "sttensor",
        "feature_schema": list(tensor.feature_schema),
        "time_index": [ts.isoformat() for ts in tensor.time_index],
    }
    return save_blobs(path, {"values": tensor.values.astype("<f4")}, meta)


def load_sttensor(path: str | Path) -> STTensor:
    arrays, meta = load_blobs(path)
    if meta.get("kind") != "sttensor":
        raise ValidationError(f"{path} does not hold an sttensor (kind={meta.get('kind')!r})")
    return STTensor(
        values=arrays["values"],
        feature_schema=tuple(meta["feature_schema"]),
        time_index=pd.DatetimeIndex(meta["time_index"]),
    )


def save_windows(
    path: str | Path,
    windows: Sequence[SampleWindow],
    flow_schema: Sequence[str],
    weather_schema: Sequence[str],
    meta: dict | None = None,
) -> Path:
    """Serialize a window set with its feature schemas and per-window labels."""
    if not windows:
        raise ValidationError("cannot save an empty window set")
    arrays = {
        "flow_hist": np.stack([w.flow_hist for w in windows]).astype("<f4"),
        "weather_hist": np.stack([w.weather_hist for w in windows]).astype("<f4"),
        "flow_future": np.stack([w.flow_future for w in windows]).astype("<f4"),
        "time_of_day": np.stack([w.time_of_day for w in windows]).astype("<i2"),
        "day_of_week": np.stack([w.day_of_week for w in windows]).astype("<i2"),
    }
    full_meta = {
        "kind": "window_set",
        "flow_schema": list(flow_schema),
        "weather_schema": list(weather_schema),
        "start_times": [w.start_time.isoformat() for w in windows],
        "sample_ids": [w.sample_id for w in windows],
        "conditions": [w.condition.value for w in windows],
        "mean_precips": [w.condition.mean_precip for w in windows],
    }
    full_meta.update(meta or {})
    return save_blobs(path, arrays, full_meta)


def load_windows(path: str | Path) -> tuple[list[SampleWindow], tuple[str, ...], tuple[str, ...]]:
    """Load a window set; returns (windows, flow_schema, weather_schema)."""
    arrays, meta = load_blobs(path)
    if meta.get("kind") != "window_set":
        raise ValidationError(f"{path} does not hold a window set (kind={meta.get('kind')!r})")
    windows = []
    for k in range(arrays["flow_hist"].shape[0]):
        windows.append(
            SampleWindow(
                flow_hist=arrays["flow_hist"][k],
                weather_hist=arrays["weather_hist"][k],
                flow_future=arrays["flow_future"][k],
                start_time=pd.Timestamp(meta["start_times"][k]),
                time_of_day=arrays["time_of_day"][k],
                day_of_week=arrays["day_of_week"][k],
                condition=ConditionLabel(meta["conditions"][k], meta["mean_precips"][k]),
                sample_id=meta["sample_ids"][k],
            )
        )
    return windows, tuple(meta["flow_schema"]), tuple(meta["weather_schema"])


def save_graph_csv(path: str | Path, graph) -> Path:
    """Write a region graph as a (parcel_id, lat, lon) CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(
        {
            "parcel_id": graph.parcel_ids,
            "lat": graph.centroids[:, 0],
            "lon": graph.centroids[:, 1],
        }
    )
    df.to_csv(path, index=False)
    return path


def load_graph_csv(path: str | Path, distances_csv: str | Path | None = None):
    from wednet.datamodel import RegionGraph

    df = pd.read_csv(path)
    for col in ("parcel_id", "lat", "lon"):
        if col not in df.columns:
            raise ValidationError(f"graph CSV missing column {col!r}")
    distances = None
    if distances_csv is not None:
        distances = pd.read_csv(distances_csv, header=None).to_numpy(dtype=np.float64)
    return RegionGraph.from_centroids(
        [str(p) for p in df["parcel_id"]],
        df[["lat", "lon"]].to_numpy(dtype=np.float64),
        distances=distances,
    )
