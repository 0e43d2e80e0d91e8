"""Command-line front end: prepare, train, evaluate, bench.

Every command is driven by a JSON config checked against CONFIG_SCHEMA
(unknown keys are rejected).  Outputs are reproducible: re-running a
command with the same config and seed overwrites its artifacts with
byte-identical content.

Exit codes: 0 success, 2 input error, 3 numeric divergence, 4 config error.

The FF_THREADS environment variable caps BLAS/OpenMP worker threads; it is
applied before numpy is imported, which is why all numeric imports here
live inside functions.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["data", "model"],
    "properties": {
        "data": {
            "type": "object",
            "additionalProperties": False,
            "required": ["path", "interval"],
            "properties": {
                "path": {"type": "string"},
                "interval": {
                    "oneOf": [{"enum": ["hourly", "daily"]},
                              {"type": "integer", "minimum": 1}],
                },
            },
        },
        "indicators": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sma_n": {"type": "integer", "minimum": 1},
                "ema_n": {"type": "integer", "minimum": 1},
                "bb_n": {"type": "integer", "minimum": 2},
                "bb_k": {"type": "number", "exclusiveMinimum": 0},
                "rsi_n": {"type": "integer", "minimum": 1},
                "cci_n": {"type": "integer", "minimum": 2},
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["variant", "window"],
            "properties": {
                "variant": {"enum": ["bilstm_only", "transformer_mh",
                                     "transformer_mh_no_indicators",
                                     "performer", "performer_bilstm"]},
                "window": {"type": "integer", "minimum": 1},
                "d_model": {"type": "integer", "minimum": 1},
                "blocks": {"type": "integer", "minimum": 1},
                "heads": {"type": "integer", "minimum": 1},
                "favor": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "r": {"type": "integer", "minimum": 1},
                        "seed": {"type": "integer", "minimum": 0},
                        "causal": {"type": "boolean"},
                        "redraw_interval": {"type": ["integer", "null"], "minimum": 1},
                    },
                },
                "bilstm_hidden": {"type": "integer", "minimum": 1},
                "fc_widths": {"type": "array", "items": {"type": "integer", "minimum": 1},
                              "minItems": 1},
                "dropout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 0},
                "batch": {"type": "integer", "minimum": 1},
                "lr": {"type": "number", "minimum": 0},
                "grad_clip": {"type": "number", "minimum": 0},
            },
        },
        "split": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0},
            "minItems": 3,
            "maxItems": 3,
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}

MODEL_DEFAULTS = {"d_model": 64, "blocks": 2, "heads": 4, "bilstm_hidden": 64,
                  "fc_widths": [64, 1], "dropout": 0.1}
TRAIN_DEFAULTS = {"epochs": 50, "batch": 32, "lr": 1e-3, "grad_clip": 1.0}
FAVOR_DEFAULTS = {"r": 128, "causal": False, "redraw_interval": None}
SPLIT_DEFAULT = [0.70, 0.15, 0.15]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIVERGED = 3
EXIT_CONFIG = 4

SPLIT_NAMES = {"train": "train", "val": "validation", "test": "test"}


def _cap_threads() -> None:
    """Honour FF_THREADS before any numpy/BLAS initialisation."""
    cap = os.environ.get("FF_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ.setdefault(var, cap)


def load_config(path, seed_override=None) -> dict:
    """Parse, schema-check and default-fill an experiment config."""
    import jsonschema

    from .errors import ConfigError

    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{path}: {exc.message}") from None

    cfg = {"data": dict(raw["data"]),
           "indicators": dict(raw.get("indicators", {})),
           "model": {**MODEL_DEFAULTS, **raw["model"]},
           "train": {**TRAIN_DEFAULTS, **raw.get("train", {})},
           "split": list(raw.get("split", SPLIT_DEFAULT)),
           "seed": int(raw.get("seed", 0))}
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    if cfg["model"]["variant"] in ("performer", "performer_bilstm"):
        favor = {**FAVOR_DEFAULTS, **cfg["model"].get("favor", {})}
        favor.setdefault("seed", cfg["seed"] + 1)
        cfg["model"]["favor"] = favor
    elif "favor" in cfg["model"]:
        raise ConfigError(
            f"variant '{cfg['model']['variant']}' does not take a favor config")
    total = sum(cfg["split"])
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"split fractions sum to {total}, expected 1")
    return cfg


def _build_dataset(cfg):
    from .data import load_csv, make_dataset
    from .indicators import IndicatorParams

    params = IndicatorParams(**cfg["indicators"])
    series = load_csv(cfg["data"]["path"], cfg["data"]["interval"])
    use_indicators = cfg["model"]["variant"] != "transformer_mh_no_indicators"
    dataset = make_dataset(series, params, cfg["model"]["window"],
                           tuple(cfg["split"]), use_indicators=use_indicators)
    return series, dataset


def _model_spec(cfg, n_features):
    from .favor import FavorConfig
    from .model import ModelSpec

    m = cfg["model"]
    favor = None
    if m.get("favor"):
        favor = FavorConfig(r=m["favor"]["r"], d_k=m["d_model"] // m["heads"],
                            seed=m["favor"]["seed"], causal=m["favor"]["causal"],
                            redraw_interval=m["favor"]["redraw_interval"])
    return ModelSpec(variant=m["variant"], window=m["window"], n_features=n_features,
                     d_model=m["d_model"], blocks=m["blocks"], heads=m["heads"],
                     favor=favor, bilstm_hidden=m["bilstm_hidden"],
                     fc_widths=tuple(m["fc_widths"]), dropout=m["dropout"],
                     seed=cfg["seed"])


def _write_json(path, payload, sort: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=sort)
        fh.write("\n")


def cmd_prepare(args) -> int:
    series, dataset = _build_dataset(load_config(args.config, args.seed))
    os.makedirs(args.out, exist_ok=True)
    warmup = len(series) - (len(dataset.windows) + dataset.window_length)
    manifest = {
        "rows": len(series),
        "interval": series.interval,
        "warmup": warmup,
        "window_length": dataset.window_length,
        "n_features": dataset.n_features,
        "columns": list(dataset.columns),
        "windows": {name: len(r) for name, r in dataset.split.named().items()},
    }
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    print(f"rows: {manifest['rows']}  warmup: {manifest['warmup']}")
    for name, count in manifest["windows"].items():
        print(f"{name} windows: {count}")
    print(f"manifest written to {os.path.join(args.out, 'manifest.json')}")
    return EXIT_OK


def cmd_train(args) -> int:
    import csv

    from .model import TrainHyperparams, build, save_checkpoint, train

    cfg = load_config(args.config, args.seed)
    _, dataset = _build_dataset(cfg)
    spec = _model_spec(cfg, dataset.n_features)
    model = build(spec)
    hp = TrainHyperparams(**cfg["train"])
    report = train(model, dataset, hp)

    os.makedirs(args.out, exist_ok=True)
    save_checkpoint(model, dataset.norm, os.path.join(args.out, "checkpoint.ffck"))
    with open(os.path.join(args.out, "train_report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    with open(os.path.join(args.out, "losses.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, (tl, vl) in enumerate(zip(report.train_losses, report.val_losses)):
            writer.writerow([epoch, repr(tl), repr(vl)])

    print(f"parameters: {report.parameter_count}")
    print(f"best epoch: {report.best_epoch}")
    if report.metrics:
        for name, value in report.metrics.to_dict().items():
            print(f"validation {name}: {value:.6g}")
    print(f"checkpoint written to {os.path.join(args.out, 'checkpoint.ffck')}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .data import evaluate_metrics, write_predictions
    from .errors import DataError
    from .model import load_checkpoint, predict_series

    cfg = load_config(args.config, args.seed)
    model, norm = load_checkpoint(args.checkpoint)
    _, dataset = _build_dataset(cfg)
    if tuple(dataset.columns) != tuple(norm.columns):
        raise DataError("checkpoint feature columns do not match the dataset")
    # re-express the windows in the checkpoint's normalization: the weights
    # assume the statistics fitted at training time, not a fresh fit
    dataset.windows = norm.normalize(dataset.norm.denormalize(dataset.windows))
    dataset.targets = norm.normalize_target(dataset.raw_targets)
    dataset.norm = norm
    split = SPLIT_NAMES[args.split]
    pred = predict_series(model, dataset, split)
    metrics = evaluate_metrics(pred.actual, pred.predicted)

    os.makedirs(args.out, exist_ok=True)
    metrics_path = os.path.join(args.out, f"metrics_{args.split}.json")
    _write_json(metrics_path, metrics.to_dict(), sort=False)  # fixed column order
    csv_path = os.path.join(args.out, f"predictions_{args.split}.csv")
    write_predictions(csv_path, pred.timestamps, pred.actual, pred.predicted)
    for name, value in metrics.to_dict().items():
        print(f"{name}: {value:.6g}")
    print(f"predictions written to {csv_path}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .favor import complexity_probe, loglog_slope, write_probe_csv

    lengths = [int(x) for x in args.lengths.split(",")]
    rows = []
    slopes = {}
    for mode in ("exact", "favor"):
        mode_rows = complexity_probe(mode, lengths, args.dk, args.r, args.reps,
                                     seed=args.seed or 0)
        rows.extend(mode_rows)
        slopes[mode] = loglog_slope(mode_rows)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "bench.csv")
    write_probe_csv(rows, path)
    for mode, slope in slopes.items():
        print(f"{mode} log-log time slope: {slope:.3f}")
    print(f"bench table written to {path}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fastforecast",
        description="Close-price forecasting with linear-attention models.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")

    p = sub.add_parser("prepare", help="ingest the CSV and summarise the dataset")
    common(p)
    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p)
    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=sorted(SPLIT_NAMES), default="test")
    p = sub.add_parser("bench", help="time exact vs linear attention over L")
    common(p, config=False)
    p.add_argument("--lengths", default="256,512,1024,2048",
                   help="comma-separated sequence lengths")
    p.add_argument("--dk", type=int, default=32, help="query/key width")
    p.add_argument("--r", type=int, default=128, help="random-feature count")
    p.add_argument("--reps", type=int, default=3, help="repetitions per length")
    return parser


def main(argv=None) -> int:
    _cap_threads()
    args = make_parser().parse_args(argv)
    from .errors import ConfigError, DataError, DivergenceError, FiniteError

    handler = {"prepare": cmd_prepare, "train": cmd_train,
               "evaluate": cmd_evaluate, "bench": cmd_bench}[args.command]
    try:
        return handler(args)
    except (FileNotFoundError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DivergenceError, FiniteError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
