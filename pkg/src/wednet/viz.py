"""Plot emission: every figure is written next to the CSV that backs it."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from wednet.causalaug import identify_spatial
from wednet.datamodel import RegionGraph, SampleWindow, ValidationError
from wednet.encoders import AttentionBundle

FIG_DPI = 150


def _finish(fig, stem: Path) -> Path:
    stem.parent.mkdir(parents=True, exist_ok=True)
    png = stem.with_suffix(".png")
    fig.savefig(png, dpi=FIG_DPI, bbox_inches="tight")
    plt.close(fig)
    return png


def causal_map(
    graph: RegionGraph,
    bundle: AttentionBundle,
    target: int,
    r_a: float,
    out_stem: str | Path,
) -> tuple[Path, Path]:
    """Causal-neighbor intensity map for one target parcel.

    Intensities are the per-target spatial influence scores used by causal
    identification, split into the intrinsic (flow self-attention) and
    weather (cross-attention) views.
    """
    if not (0 <= target < graph.n_parcels):
        raise ValidationError(f"target parcel index {target} out of range")
    selection = identify_spatial(bundle.self_spatial, bundle.cross_spatial, r_a)
    score_flow = np.asarray(bundle.self_spatial, dtype=np.float64).mean(axis=0)[target]
    score_weather = np.asarray(bundle.cross_spatial, dtype=np.float64).mean(axis=0)[target]
    df = pd.DataFrame(
        {
            "parcel_id": graph.parcel_ids,
            "lat": graph.centroids[:, 0],
            "lon": graph.centroids[:, 1],
            "score_flow": score_flow,
            "score_weather": score_weather,
            "causal": [int(j in selection.per_parcel[target]) for j in range(graph.n_parcels)],
        }
    )
    stem = Path(out_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv = stem.with_suffix(".csv")
    df.to_csv(csv, index=False)

    fig, axes = plt.subplots(1, 2, figsize=(10, 4.2), sharex=True, sharey=True)
    for ax, col, title in (
        (axes[0], "score_flow", "intrinsic neighbors"),
        (axes[1], "score_weather", "weather-effect neighbors"),
    ):
        sc = ax.scatter(df["lon"], df["lat"], c=df[col], cmap="viridis", s=60)
        ax.scatter(
            df["lon"][target], df["lat"][target], marker="*", s=240,
            facecolor="gold", edgecolor="black", label="target",
        )
        ax.set_title(f"{title} of {graph.parcel_ids[target]}")
        ax.set_xlabel("lon")
        fig.colorbar(sc, ax=ax, shrink=0.85)
    axes[0].set_ylabel("lat")
    axes[0].legend(loc="lower right")
    return _finish(fig, stem), csv


def pca_scatter(
    intr: np.ndarray,
    weat: np.ndarray | None,
    conditions: Sequence[str],
    out_stem: str | Path,
) -> tuple[Path, Path]:
    """2-D principal-component projection of pooled branch states per sample."""
    rows = [intr] if weat is None else [intr, weat]
    branches = ["intrinsic"] * len(intr) + ([] if weat is None else ["weather"] * len(weat))
    stacked = np.concatenate(rows, axis=0)
    centered = stacked - stacked.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    pcs = centered @ vt[:2].T
    df = pd.DataFrame(
        {
            "pc1": pcs[:, 0],
            "pc2": pcs[:, 1],
            "branch": branches,
            "condition": list(conditions) * (2 if weat is not None else 1),
        }
    )
    stem = Path(out_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv = stem.with_suffix(".csv")
    df.to_csv(csv, index=False)

    fig, ax = plt.subplots(figsize=(5.5, 5))
    markers = {"intrinsic": "o", "weather": "^"}
    colors = {"normal": "tab:blue", "extreme": "tab:red"}
    for branch in df["branch"].unique():
        for cond in df["condition"].unique():
            sel = (df["branch"] == branch) & (df["condition"] == cond)
            ax.scatter(
                df.loc[sel, "pc1"], df.loc[sel, "pc2"],
                marker=markers[branch], c=colors.get(cond, "gray"),
                alpha=0.55, s=22, label=f"{branch}/{cond}",
            )
    ax.set_xlabel("pc1")
    ax.set_ylabel("pc2")
    ax.legend(fontsize=8)
    ax.set_title("branch representations by weather condition")
    return _finish(fig, stem), csv


def pred_curve(
    times: Sequence,
    truth: np.ndarray,
    pred: np.ndarray,
    precip: np.ndarray,
    parcel_label: str,
    out_stem: str | Path,
) -> tuple[Path, Path]:
    """Predicted vs. true flow for one parcel, with precipitation overlaid."""
    df = pd.DataFrame({"time": list(times), "true": truth, "pred": pred, "precip": precip})
    stem = Path(out_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv = stem.with_suffix(".csv")
    df.to_csv(csv, index=False)

    fig, ax = plt.subplots(figsize=(9, 3.8))
    ax.plot(df["time"], df["true"], label="observed", color="black", lw=1.2)
    ax.plot(df["time"], df["pred"], label="predicted", color="tab:orange", lw=1.2)
    ax.set_ylabel(f"flow at {parcel_label}")
    ax2 = ax.twinx()
    ax2.fill_between(df["time"], 0, df["precip"], color="tab:blue", alpha=0.25, label="precip")
    ax2.set_ylabel("precip (in/hr)")
    ax.legend(loc="upper left", fontsize=8)
    fig.autofmt_xdate()
    return _finish(fig, stem), csv


def metrics_bars(frame: pd.DataFrame, out_stem: str | Path, title: str = "") -> Path:
    """Bar chart of per-condition metrics from an evaluation report frame."""
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    plot = frame[frame["condition"].isin(["normal", "extreme"])]
    x = np.arange(len(plot))
    ax.bar(x - 0.18, plot["mae"], width=0.36, label="MAE")
    ax.bar(x + 0.18, plot["rmse"], width=0.36, label="RMSE")
    ax.set_xticks(x, plot["condition"])
    ax.set_ylabel("flow units")
    if title:
        ax.set_title(title)
    ax.legend()
    return _finish(fig, Path(out_stem))


def ablation_bars(table: pd.DataFrame, out_stem: str | Path) -> Path:
    """Grouped bars of mean extreme/normal MAE per ablation variant."""
    fig, ax = plt.subplots(figsize=(7, 3.8))
    conds = ["extreme", "normal"]
    sub = table[table["condition"].isin(conds)]
    means = sub.groupby(["variant", "condition"])["mae"].mean().unstack()
    stds = sub.groupby(["variant", "condition"])["mae"].std().unstack()
    x = np.arange(len(means))
    for k, cond in enumerate(conds):
        offs = (k - 0.5) * 0.36
        ax.bar(x + offs, means[cond], width=0.36, yerr=stds[cond].fillna(0.0),
               capsize=3, label=cond)
    ax.set_xticks(x, means.index, rotation=20)
    ax.set_ylabel("test MAE")
    ax.set_title("ablation variants")
    ax.legend()
    return _finish(fig, Path(out_stem))
