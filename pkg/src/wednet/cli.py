"""Command-line interface: ingest, synth, train, augment, eval, ablate, viz."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from wednet import container, viz
from wednet.causalaug import augment_dataset
from wednet.configfile import build_dataclass, load_kv
from wednet.datamodel import STTensor, ValidationError
from wednet.harness import (
    DataBundle,
    Forecaster,
    TrainConfig,
    config_hash,
    evaluate,
    run_ablation,
    summarize_ablation,
    train,
)
from wednet.ingest import aggregate_trips, idw_interpolate, read_stations_csv, read_trips_csv
from wednet.network import ModelConfig, VARIANTS
from wednet.synth import SynthConfig, generate_synthetic

DATA_ENV = "WEDNET_DATA_DIR"


def _git_revision() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True, text=True, timeout=5, check=True,
        )
        return out.stdout.strip()
    except Exception:
        return "unknown"


def write_manifest(out_dir: Path, command: str, cfg_digest: str, seeds: list[int], extra: dict | None = None) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config_hash": cfg_digest,
        "git_revision": _git_revision(),
        "seeds": seeds,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        **(extra or {}),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def _data_dir(args) -> Path:
    if args.data:
        return Path(args.data)
    env = os.environ.get(DATA_ENV)
    if env:
        return Path(env)
    raise ValidationError(f"no data directory: pass --data or set {DATA_ENV}")


def _model_config(args, n_parcels: int) -> ModelConfig:
    if args.preset == "compact":
        cfg = ModelConfig.compact(n_parcels)
    else:
        cfg = ModelConfig(n_parcels=n_parcels)
    overrides = {
        name: getattr(args, name)
        for name in ("n_blocks", "n_heads", "memory_slots", "dropout", "grl_strength")
        if getattr(args, name, None) is not None
    }
    return replace(cfg, **overrides) if overrides else cfg


def _train_config(args) -> TrainConfig:
    kv = load_kv(args.config) if args.config else {}
    overrides = {
        "batch_size": args.batch_size,
        "lr": args.lr,
        "epochs": args.epochs,
        "eta": args.eta,
        "seed": args.seed,
        "variant": getattr(args, "variant", None),
    }
    return build_dataclass(TrainConfig, kv, overrides)


def cmd_synth(args) -> int:
    kv = load_kv(args.config) if args.config else {}
    cfg = build_dataclass(SynthConfig, kv, {"seed": args.seed})
    graph, flow, weather = generate_synthetic(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    container.save_graph_csv(out / "graph.csv", graph)
    container.save_sttensor(out / "flow", flow)
    container.save_sttensor(out / "weather", weather)
    write_manifest(out, "synth", config_hash(cfg), [cfg.seed])
    print(f"synthetic city: {graph.n_parcels} parcels x {flow.n_steps} hours -> {out}")
    return 0


def cmd_ingest(args) -> int:
    graph = container.load_graph_csv(args.graph, args.distances)
    trips = read_trips_csv(args.trips)
    stations = read_stations_csv(args.stations)
    flow = aggregate_trips(trips, graph)
    weather = idw_interpolate(stations, graph, power=args.idw_power, ffill=args.ffill)
    common = flow.time_index.intersection(weather.time_index)
    if len(common) == 0:
        raise ValidationError("trip and station time ranges do not overlap")
    f_sel = flow.time_index.get_indexer(common)
    w_sel = weather.time_index.get_indexer(common)
    flow = STTensor(flow.values[f_sel], flow.feature_schema, common)
    weather = STTensor(weather.values[w_sel], weather.feature_schema, common)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    container.save_graph_csv(out / "graph.csv", graph)
    container.save_sttensor(out / "flow", flow)
    container.save_sttensor(out / "weather", weather)
    write_manifest(out, "ingest", config_hash({"idw_power": args.idw_power, "ffill": args.ffill}), [])
    print(f"ingested {len(trips)} trips, {len(stations)} station readings over {len(common)} hours -> {out}")
    return 0


def cmd_train(args) -> int:
    bundle = DataBundle.from_dir(_data_dir(args))
    cfg = _train_config(args)
    model_cfg = _model_config(args, bundle.n_parcels)
    result = train(bundle, cfg, model_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digest = config_hash(cfg, model_cfg)
    result.forecaster.save(
        out / "checkpoint",
        {"train_config": dataclasses.asdict(cfg), "config_hash": digest},
    )
    result.log.to_csv(out / "train_log.csv", index=False)
    pd.DataFrame({"step": range(len(result.lr_trace)), "lr": result.lr_trace}).to_csv(
        out / "lr_trace.csv", index=False
    )
    write_manifest(out, "train", digest, [cfg.seed], {"diverged": result.diverged})
    status = "diverged; kept last good checkpoint" if result.diverged else "ok"
    print(
        f"trained variant={cfg.variant} seed={cfg.seed} epochs={len(result.log)}"
        f" best_val_mae={result.best_val_mae:.4f} ({status}) -> {out}"
    )
    return 0


def cmd_eval(args) -> int:
    forecaster, meta = Forecaster.load(args.ckpt)
    bundle = DataBundle.from_dir(_data_dir(args))
    windows = bundle.split(args.split)
    report = evaluate(forecaster, windows, meta.get("config_hash", ""))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frame = report.to_frame()
    frame.to_csv(out / "metrics.csv", index=False)
    (out / "metrics.json").write_text(
        json.dumps(
            {"conditions": report.conditions, "config_hash": report.config_hash,
             "wall_time_s": report.wall_time_s, "split": args.split},
            indent=2,
        )
    )
    viz.metrics_bars(frame, out / "metrics", title=f"{args.split} split")
    write_manifest(out, "eval", report.config_hash, [])
    print(frame.to_string(index=False))
    return 0


def cmd_augment(args) -> int:
    data_dir = _data_dir(args)
    bundle = DataBundle.from_dir(data_dir)
    forecaster, _ = Forecaster.load(args.ckpt)
    precip = bundle.weather_schema and [
        i for i, e in enumerate(bundle.weather_schema) if e.startswith("precip")
    ]
    if not precip:
        raise ValidationError(f"weather schema {bundle.weather_schema} lacks a precip feature")
    augmented, aug_report = augment_dataset(
        bundle.train,
        forecaster.attention,
        multiplier=args.r,
        r_a=args.ra,
        window_w=args.window,
        seed=args.seed,
        precip_feature=precip[0],
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("graph.csv", "flow.json", "flow.bin", "weather.json", "weather.bin"):
        (out / name).write_bytes((data_dir / name).read_bytes())
    container.save_windows(
        out / "windows_train", augmented, bundle.flow_schema, bundle.weather_schema,
        meta={"augmentation": aug_report.to_dict() | {"provenance": "see report"}},
    )
    (out / "augment_report.json").write_text(json.dumps(aug_report.to_dict(), indent=2))
    write_manifest(
        out, "augment",
        config_hash({"r": args.r, "ra": args.ra, "window": args.window, "seed": args.seed}),
        [args.seed],
    )
    print(
        f"augmented train set: {aug_report.n_base} -> {len(augmented)} windows"
        f" ({aug_report.n_augmented} new, {len(aug_report.skipped)} extremes skipped) -> {out}"
    )
    return 0


def cmd_ablate(args) -> int:
    bundle = DataBundle.from_dir(_data_dir(args))
    cfg = _train_config(args)
    model_cfg = _model_config(args, bundle.n_parcels)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    table = run_ablation(bundle, variants, seeds, cfg, model_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "ablation.csv", index=False)
    summarize_ablation(table).to_csv(out / "ablation_summary.csv", index=False)
    viz.ablation_bars(table, out / "ablation")
    write_manifest(out, "ablate", config_hash(cfg, model_cfg), seeds, {"variants": variants})
    print(summarize_ablation(table).to_string(index=False))
    return 0


def cmd_viz(args) -> int:
    forecaster, _ = Forecaster.load(args.ckpt)
    bundle = DataBundle.from_dir(_data_dir(args))
    windows = bundle.split(args.split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.kind == "causal_map":
        sample = next((w for w in windows if w.condition.is_extreme), windows[0])
        branch_bundle = forecaster.attention(sample)
        target = bundle.graph.index_of(args.parcel) if args.parcel else 0
        png, csv = viz.causal_map(bundle.graph, branch_bundle, target, args.ra, out / "causal_map")
    elif args.kind == "pca":
        intr, weat = forecaster.branch_states(windows)
        conditions = [w.condition.value for w in windows]
        png, csv = viz.pca_scatter(intr, weat, conditions, out / "pca")
    elif args.kind == "pred_curve":
        png, csv = _pred_curve(forecaster, bundle, windows, args.parcel, out)
    else:
        raise ValidationError(f"unknown viz kind {args.kind!r}")
    write_manifest(out, f"viz:{args.kind}", "", [])
    print(f"wrote {png} and {csv}")
    return 0


def _pred_curve(forecaster: Forecaster, bundle: DataBundle, windows, parcel: str | None, out: Path):
    horizon = windows[0].horizon
    hist_len = windows[0].hist_len
    picks = list(range(0, len(windows), horizon))[:20]  # non-overlapping stretch
    tiled = [windows[i] for i in picks]
    pred = forecaster.predict(tiled)
    p = bundle.graph.index_of(parcel) if parcel else 0
    precip_idx = [i for i, e in enumerate(bundle.weather_schema) if e.startswith("precip")][0]
    times, truth, yhat, rain = [], [], [], []
    for k, (i, w) in enumerate(zip(picks, tiled)):
        # windows are stride-1, so the history of window i + hist_len covers
        # exactly this window's future steps; use it for the rain overlay
        peer = windows[i + hist_len] if i + hist_len < len(windows) else None
        for s in range(horizon):
            times.append(w.start_time + pd.Timedelta(hours=hist_len + s))
            truth.append(float(w.flow_future[s, p, 0]))
            yhat.append(float(pred[k, s, p, 0]))
            rain.append(float(peer.weather_hist[s, p, precip_idx]) if peer is not None else 0.0)
    return viz.pred_curve(
        times, np.array(truth), np.array(yhat), np.array(rain),
        bundle.graph.parcel_ids[p], out / "pred_curve",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wednet",
        description="Weather-effect disentanglement forecasting for urban flow.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic weather-coupled city")
    p.add_argument("--config", help="key = value synthesis config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="build aligned tensors from trips and station CSVs")
    p.add_argument("--trips", required=True)
    p.add_argument("--stations", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--distances", default=None, help="optional N x N distance CSV")
    p.add_argument("--idw-power", type=float, default=2.0, dest="idw_power")
    p.add_argument(
        "--ffill", action="store_true",
        help="carry the last hourly value forward over station gaps instead of failing",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    def add_train_flags(q, with_variant=True):
        q.add_argument("--data", default=None, help=f"dataset dir (default ${DATA_ENV})")
        q.add_argument("--config", help="key = value training config file")
        q.add_argument("--preset", choices=("paper", "compact"), default="paper")
        q.add_argument("--epochs", type=int, default=None)
        q.add_argument("--batch-size", type=int, default=None, dest="batch_size")
        q.add_argument("--lr", type=float, default=None)
        q.add_argument("--eta", type=float, default=None)
        q.add_argument("--grl-lambda", type=float, default=None, dest="grl_strength")
        q.add_argument("--blocks", type=int, default=None, dest="n_blocks")
        q.add_argument("--heads", type=int, default=None, dest="n_heads")
        q.add_argument("--memory-slots", type=int, default=None, dest="memory_slots")
        q.add_argument("--dropout", type=float, default=None)
        if with_variant:
            q.add_argument("--variant", choices=VARIANTS, default=None)
        q.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint per weather condition")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment", help="causally augment the training split")
    p.add_argument("--data", default=None)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--r", type=int, default=2, help="augmented copies per extreme sample")
    p.add_argument("--ra", type=float, default=0.2, help="causal proportion")
    p.add_argument("--window", type=int, default=1, help="temporal expansion half-width")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("ablate", help="train ablation variants across seeds")
    add_train_flags(p, with_variant=False)
    p.add_argument("--variants", default="full,no_weather,self_attn_weather,no_memory,no_discriminator")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("viz", help="emit figures plus the CSVs behind them")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--kind", choices=("causal_map", "pca", "pred_curve"), required=True)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--parcel", default=None, help="parcel id for parcel-centric plots")
    p.add_argument("--ra", type=float, default=0.2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_viz)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
