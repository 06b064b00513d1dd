"""Training loop, evaluation protocol, and ablation runner."""

from __future__ import annotations

import copy
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import torch

from wednet import container
from wednet.datamodel import (
    CONDITION_CLASSES,
    NumericalError,
    RegionGraph,
    SampleWindow,
    ValidationError,
    chronological_split,
    partition_by_condition,
)
from wednet.encoders import AttentionBundle
from wednet.fusion import compute_loss
from wednet.ingest import make_windows
from wednet.network import ModelConfig, VARIANTS, WEDNet, build_model, load_checkpoint, save_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    lr: float = 1e-3
    weight_decay: float = 5e-4
    epochs: int = 30
    eta: float = 0.1
    warmup_frac: float = 0.3
    final_lr_div: float = 25.0
    patience: int = 10
    seed: int = 0
    variant: str = "full"

    def __post_init__(self) -> None:
        for name in ("batch_size", "lr", "weight_decay", "epochs", "patience"):
            if getattr(self, name) <= 0 and name != "weight_decay":
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.weight_decay < 0 or self.eta < 0:
            raise ValidationError("weight_decay and eta must be >= 0")
        if not (0.0 < self.warmup_frac < 1.0):
            raise ValidationError(f"warmup_frac must lie in (0, 1), got {self.warmup_frac}")
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


def config_hash(*configs) -> str:
    """Stable short hash over one or more config dataclasses/dicts."""
    payload = []
    for cfg in configs:
        payload.append(asdict(cfg) if hasattr(cfg, "__dataclass_fields__") else cfg)
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class Scaler:
    """Train-split statistics: flow is z-scored, weather min-max scaled to [0, 1]."""

    flow_mean: np.ndarray
    flow_std: np.ndarray
    weather_min: np.ndarray
    weather_max: np.ndarray

    @classmethod
    def fit(cls, windows: Sequence[SampleWindow]) -> "Scaler":
        if not windows:
            raise ValidationError("cannot fit a scaler on zero windows")
        flow = np.concatenate(
            [np.stack([w.flow_hist for w in windows]), np.stack([w.flow_future for w in windows])],
            axis=1,
        )
        weather = np.stack([w.weather_hist for w in windows])
        return cls(
            flow_mean=flow.mean(axis=(0, 1, 2), dtype=np.float64),
            flow_std=np.maximum(flow.std(axis=(0, 1, 2), dtype=np.float64), 1e-8),
            weather_min=weather.min(axis=(0, 1, 2)).astype(np.float64),
            weather_max=weather.max(axis=(0, 1, 2)).astype(np.float64),
        )

    def transform_flow(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.flow_mean) / self.flow_std).astype(np.float32)

    def inverse_flow(self, x: np.ndarray) -> np.ndarray:
        return (x * self.flow_std + self.flow_mean).astype(np.float64)

    def transform_weather(self, x: np.ndarray) -> np.ndarray:
        span = np.maximum(self.weather_max - self.weather_min, 1e-8)
        return ((x - self.weather_min) / span).astype(np.float32)

    def to_dict(self) -> dict:
        return {k: np.asarray(v).tolist() for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(**{k: np.asarray(v, dtype=np.float64) for k, v in d.items()})


@dataclass(frozen=True)
class Batch:
    """Stacked, standardized window arrays ready for tensor conversion."""

    flow: np.ndarray  # (K, T, N, d_f) standardized
    weather: np.ndarray  # (K, T, N, d_m) scaled
    target: np.ndarray  # (K, T', N, d_f) standardized
    target_raw: np.ndarray  # (K, T', N, d_f) original units
    tod: np.ndarray  # (K, T) int64
    dow: np.ndarray
    condition: np.ndarray  # (K,) int64 class index

    def __len__(self) -> int:
        return self.flow.shape[0]


def stack_windows(windows: Sequence[SampleWindow], scaler: Scaler) -> Batch:
    if not windows:
        raise ValidationError("cannot stack zero windows")
    flow = np.stack([w.flow_hist for w in windows])
    weather = np.stack([w.weather_hist for w in windows])
    target_raw = np.stack([w.flow_future for w in windows]).astype(np.float64)
    return Batch(
        flow=scaler.transform_flow(flow),
        weather=scaler.transform_weather(weather),
        target=scaler.transform_flow(target_raw),
        target_raw=target_raw,
        tod=np.stack([w.time_of_day for w in windows]).astype(np.int64),
        dow=np.stack([w.day_of_week for w in windows]).astype(np.int64),
        condition=np.array([w.condition.class_index for w in windows], dtype=np.int64),
    )


@dataclass
class DataBundle:
    """A dataset ready for the harness: graph, schemas, and split windows."""

    graph: RegionGraph
    flow_schema: tuple[str, ...]
    weather_schema: tuple[str, ...]
    train: list[SampleWindow]
    valid: list[SampleWindow]
    test: list[SampleWindow]

    @property
    def n_parcels(self) -> int:
        return self.graph.n_parcels

    def split(self, name: str) -> list[SampleWindow]:
        if name not in ("train", "valid", "test"):
            raise ValidationError(f"unknown split {name!r}")
        return getattr(self, name)

    @classmethod
    def from_dir(
        cls,
        data_dir: str | Path,
        hist_len: int = 12,
        horizon: int = 12,
        stride: int = 1,
    ) -> "DataBundle":
        """Load a dataset directory; an augmented train container overrides the
        train split derived from the raw tensors."""
        data_dir = Path(data_dir)
        graph = container.load_graph_csv(data_dir / "graph.csv")
        flow = container.load_sttensor(data_dir / "flow")
        weather = container.load_sttensor(data_dir / "weather")
        windows = make_windows(flow, weather, hist_len, horizon, stride)
        split = chronological_split(windows)
        train = list(split.train)
        override = data_dir / "windows_train.json"
        if override.exists():
            train, _, _ = container.load_windows(data_dir / "windows_train")
        return cls(
            graph=graph,
            flow_schema=flow.feature_schema,
            weather_schema=weather.feature_schema,
            train=train,
            valid=list(split.valid),
            test=list(split.test),
        )


class Forecaster:
    """A trained model plus the scaling needed to use it on raw windows."""

    def __init__(self, model: WEDNet, scaler: Scaler) -> None:
        self.model = model
        self.scaler = scaler

    @property
    def cfg(self) -> ModelConfig:
        return self.model.cfg

    def predict(self, windows: Sequence[SampleWindow], batch_size: int = 256) -> np.ndarray:
        """De-standardized predictions, shape (K, T', N, d_f)."""
        batch = stack_windows(windows, self.scaler)
        self.model.eval()
        outs = []
        with torch.no_grad():
            for lo in range(0, len(batch), batch_size):
                hi = lo + batch_size
                out = self.model(
                    torch.from_numpy(batch.flow[lo:hi]),
                    torch.from_numpy(batch.weather[lo:hi]),
                    torch.from_numpy(batch.tod[lo:hi]),
                    torch.from_numpy(batch.dow[lo:hi]),
                )
                outs.append(out.prediction.numpy())
        pred = np.concatenate(outs, axis=0)
        return self.scaler.inverse_flow(pred)

    def attention(self, window: SampleWindow) -> AttentionBundle:
        batch = stack_windows([window], self.scaler)
        return self.model.attention_bundle(
            torch.from_numpy(batch.flow),
            torch.from_numpy(batch.weather),
            torch.from_numpy(batch.tod),
            torch.from_numpy(batch.dow),
        )

    def branch_states(self, windows: Sequence[SampleWindow], batch_size: int = 256):
        """Pooled (mean over steps/parcels) intrinsic and weather states per window."""
        batch = stack_windows(windows, self.scaler)
        self.model.eval()
        intr, weat = [], []
        with torch.no_grad():
            for lo in range(0, len(batch), batch_size):
                hi = lo + batch_size
                out = self.model(
                    torch.from_numpy(batch.flow[lo:hi]),
                    torch.from_numpy(batch.weather[lo:hi]),
                    torch.from_numpy(batch.tod[lo:hi]),
                    torch.from_numpy(batch.dow[lo:hi]),
                )
                intr.append(out.h_intr.mean(dim=(1, 2)).numpy())
                if out.h_weat is not None:
                    weat.append(out.h_weat.mean(dim=(1, 2)).numpy())
        return np.concatenate(intr), (np.concatenate(weat) if weat else None)

    def save(self, path: str | Path, extra_meta: dict | None = None) -> Path:
        meta = {"scaler": self.scaler.to_dict(), **(extra_meta or {})}
        return save_checkpoint(path, self.model, meta)

    @classmethod
    def load(cls, path: str | Path) -> tuple["Forecaster", dict]:
        model, meta = load_checkpoint(path)
        return cls(model, Scaler.from_dict(meta["scaler"])), meta


@dataclass
class TrainResult:
    forecaster: Forecaster
    log: pd.DataFrame  # one row per epoch
    lr_trace: list[float]  # one entry per optimizer step
    best_epoch: int
    best_val_mae: float
    diverged: bool = False


def train(
    bundle: DataBundle,
    cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
) -> TrainResult:
    """Train one model; fully deterministic given (config, seed, data).

    Minimizes prediction MAE plus the eta-weighted adversarial loss with
    decoupled weight decay and a one-cycle learning-rate schedule (warm-up to
    the peak at ``warmup_frac`` of the steps, annealing to lr / final_lr_div).
    The best-validation checkpoint is retained; a non-finite loss aborts with
    the last good state.
    """
    torch.manual_seed(cfg.seed)
    if model_cfg is None:
        model_cfg = ModelConfig(n_parcels=bundle.n_parcels, variant=cfg.variant)
    elif model_cfg.variant != cfg.variant:
        model_cfg = replace(model_cfg, variant=cfg.variant)
    model = WEDNet(model_cfg)

    scaler = Scaler.fit(bundle.train)
    train_batch = stack_windows(bundle.train, scaler)
    valid_batch = stack_windows(bundle.valid, scaler) if bundle.valid else None

    n = len(train_batch)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    schedule = torch.optim.lr_scheduler.OneCycleLR(
        optimizer,
        max_lr=cfg.lr,
        total_steps=total_steps,
        pct_start=cfg.warmup_frac,
        div_factor=cfg.final_lr_div,
        final_div_factor=1.0,
    )

    flow_t = torch.from_numpy(train_batch.flow)
    weather_t = torch.from_numpy(train_batch.weather)
    target_t = torch.from_numpy(train_batch.target)
    tod_t = torch.from_numpy(train_batch.tod)
    dow_t = torch.from_numpy(train_batch.dow)
    cond_t = torch.from_numpy(train_batch.condition)

    rng = np.random.default_rng(cfg.seed)
    rows = []
    lr_trace: list[float] = []
    best_state = copy.deepcopy(model.state_dict())
    best_val = math.inf
    best_epoch = -1
    bad_epochs = 0
    diverged = False

    for epoch in range(cfg.epochs):
        model.train()
        perm = rng.permutation(n)
        pre_sum = dis_sum = total_sum = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = torch.from_numpy(perm[lo : lo + cfg.batch_size])
            optimizer.zero_grad(set_to_none=True)
            try:
                out = model(
                    flow_t[idx], weather_t[idx], tod_t[idx], dow_t[idx], condition=cond_t[idx]
                )
                total, report = compute_loss(out.prediction, target_t[idx], out.loss_dis, cfg.eta)
            except NumericalError:
                diverged = True
                break
            if not math.isfinite(report.total):
                diverged = True
                break
            lr_trace.append(float(optimizer.param_groups[0]["lr"]))
            total.backward()
            optimizer.step()
            schedule.step()
            frac = len(idx) / n
            pre_sum += report.loss_pre * frac
            dis_sum += report.loss_dis * frac
            total_sum += report.total * frac
        if diverged:
            break  # abort with the last good checkpoint in best_state

        val_mae = math.nan
        if valid_batch is not None:
            val_mae = _masked_mae(model, valid_batch, scaler)
        rows.append(
            {
                "epoch": epoch,
                "train_loss_pre": pre_sum,
                "train_loss_dis": dis_sum,
                "train_total": total_sum,
                "val_mae": val_mae,
            }
        )
        if valid_batch is None:
            best_state = copy.deepcopy(model.state_dict())
            best_epoch = epoch
        elif val_mae < best_val:
            best_val = val_mae
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > cfg.patience:
                break

    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(
        forecaster=Forecaster(model, scaler),
        log=pd.DataFrame(rows),
        lr_trace=lr_trace,
        best_epoch=best_epoch,
        best_val_mae=best_val,
        diverged=diverged,
    )


def _masked_mae(model: WEDNet, batch: Batch, scaler: Scaler, batch_size: int = 512) -> float:
    model.eval()
    errs = []
    with torch.no_grad():
        for lo in range(0, len(batch), batch_size):
            hi = lo + batch_size
            out = model(
                torch.from_numpy(batch.flow[lo:hi]),
                torch.from_numpy(batch.weather[lo:hi]),
                torch.from_numpy(batch.tod[lo:hi]),
                torch.from_numpy(batch.dow[lo:hi]),
            )
            pred = scaler.inverse_flow(out.prediction.numpy())
            errs.append(np.abs(pred - batch.target_raw[lo:hi]))
    return float(np.concatenate(errs, axis=0).mean())


@dataclass
class MetricsReport:
    """Per-condition MAE/RMSE in flow units, plus run provenance."""

    conditions: dict[str, dict[str, float]]
    config_hash: str = ""
    wall_time_s: float = 0.0

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"condition": cond, **metrics} for cond, metrics in self.conditions.items()
        ]
        return pd.DataFrame(rows)

    def mae(self, condition: str) -> float:
        return self.conditions[condition]["mae"]


def _error_metrics(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    err = pred - truth
    mae = float(np.abs(err).mean())
    rmse = float(np.sqrt(np.mean(err**2)))
    return mae, rmse


def evaluate(
    forecaster: Forecaster,
    windows: Sequence[SampleWindow],
    run_hash: str = "",
) -> MetricsReport:
    """MAE/RMSE over all predicted entries, reported per weather condition."""
    if not windows:
        raise ValidationError("cannot evaluate on zero windows")
    t0 = time.perf_counter()
    pred = forecaster.predict(windows)
    truth = np.stack([w.flow_future for w in windows]).astype(np.float64)
    conditions: dict[str, dict[str, float]] = {}
    mae, rmse = _error_metrics(pred, truth)
    conditions["all"] = {"mae": mae, "rmse": rmse, "count": float(len(windows))}
    by_cond = partition_by_condition(windows)
    for cond in CONDITION_CLASSES:
        members = by_cond[cond]
        if not members:
            conditions[cond] = {"mae": math.nan, "rmse": math.nan, "count": 0.0}
            continue
        sel = [i for i, w in enumerate(windows) if w.condition.value == cond]
        mae, rmse = _error_metrics(pred[sel], truth[sel])
        conditions[cond] = {"mae": mae, "rmse": rmse, "count": float(len(sel))}
    return MetricsReport(conditions, run_hash, time.perf_counter() - t0)


def persistence_baseline(windows: Sequence[SampleWindow]) -> float:
    """MAE of repeating each window's last observed flow across the horizon."""
    if not windows:
        raise ValidationError("cannot evaluate on zero windows")
    errs = []
    for w in windows:
        pred = np.repeat(w.flow_hist[-1:][None], w.horizon, axis=1)
        errs.append(np.abs(pred[0] - w.flow_future.astype(np.float64)))
    return float(np.concatenate(errs).mean())


def run_ablation(
    bundle: DataBundle,
    variants: Sequence[str],
    seeds: Sequence[int],
    cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
) -> pd.DataFrame:
    """Train each variant across seeds and tabulate per-condition test metrics.

    Returns one row per (variant, seed, condition) with mae/rmse columns;
    aggregation to mean +/- std happens in ``summarize_ablation``.
    """
    if not seeds:
        raise ValidationError("need at least one seed")
    rows = []
    for variant in variants:
        if variant not in VARIANTS:
            raise ValidationError(f"unknown variant {variant!r}")
        for seed in seeds:
            run_cfg = replace(cfg, variant=variant, seed=seed)
            result = train(bundle, run_cfg, model_cfg)
            report = evaluate(result.forecaster, bundle.test, config_hash(run_cfg))
            for cond, metrics in report.conditions.items():
                rows.append(
                    {
                        "variant": variant,
                        "seed": seed,
                        "condition": cond,
                        "mae": metrics["mae"],
                        "rmse": metrics["rmse"],
                        "count": metrics["count"],
                    }
                )
    return pd.DataFrame(rows)


def summarize_ablation(table: pd.DataFrame) -> pd.DataFrame:
    agg = (
        table.groupby(["variant", "condition"])[["mae", "rmse"]]
        .agg(["mean", "std"])
        .reset_index()
    )
    agg.columns = ["_".join(c).rstrip("_") for c in agg.columns]
    return agg
