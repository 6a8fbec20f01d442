"""Command-line surface: generate | train | eval | ablate | sweep.

Config files are INI-style with sections [dataset], [teacher], [student]
and [sweep]. Command-line flags override file values, which override the
built-in defaults. Every command writes a manifest (config snapshot,
dataset fingerprint, seeds, artifact paths, timings) and machine-readable
one-record-per-line results next to the human-readable output.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data, modelio, pipeline
from .errors import (ConfigError, DataError, DimensionError, MetricError,
                     ParseError, SplitError, TrainingError)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING_ARTIFACT = 3
EXIT_DATA = 4
EXIT_TRAINING = 5

SWEEP_PARAMS = ("alpha", "beta", "lambda", "tau")

DATASET_KEYS = {f.name for f in dataclasses.fields(data.SyntheticConfig)} \
    | {"file", "frac_valid", "frac_test"}
TRAIN_KEYS = {f.name for f in dataclasses.fields(pipeline.DistillConfig)} \
    - {"mode"} | {"lambda"}
SWEEP_KEYS = {"param", "grid", "seeds"}


def _parse_config(path: Path) -> configparser.ConfigParser:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    allowed = {"dataset": DATASET_KEYS, "teacher": TRAIN_KEYS,
               "student": TRAIN_KEYS, "sweep": SWEEP_KEYS}
    for section in parser.sections():
        if section not in allowed:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in allowed[section]:
                raise ConfigError(f"unknown config key {key!r} in "
                                  f"[{section}]")
    return parser


def _coerce(value: str, target):
    if isinstance(target, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(target, int):
        return int(value)
    if isinstance(target, float):
        return float(value)
    if isinstance(target, tuple):
        return tuple(int(v) for v in value.split(",") if v.strip())
    return value


def _dataset_config(parser: configparser.ConfigParser,
                    seed: int | None) -> data.SyntheticConfig:
    kwargs = {}
    section = parser["dataset"] if parser.has_section("dataset") else {}
    defaults = data.SyntheticConfig()
    for f in dataclasses.fields(data.SyntheticConfig):
        if f.name in section:
            kwargs[f.name] = _coerce(section[f.name],
                                     getattr(defaults, f.name))
    try:
        cfg = data.SyntheticConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg


def _train_config(parser: configparser.ConfigParser, section_name: str,
                  seed: int | None, mode: str | None,
                  overrides: dict | None = None) -> pipeline.DistillConfig:
    kwargs = {}
    section = parser[section_name] if parser.has_section(section_name) else {}
    defaults = pipeline.DistillConfig()
    for f in dataclasses.fields(pipeline.DistillConfig):
        key = "lambda" if f.name == "lam" else f.name
        if key in section:
            kwargs[f.name] = _coerce(section[key], getattr(defaults, f.name))
    cfg = pipeline.DistillConfig(**kwargs)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if mode is not None:
        cfg = replace(cfg, mode=mode)
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def _split_fractions(parser) -> tuple[float, float]:
    section = parser["dataset"] if parser.has_section("dataset") else {}
    return (float(section.get("frac_valid", 0.1)),
            float(section.get("frac_test", 0.1)))


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("MGKD_OUT_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _config_snapshot(cfg) -> dict:
    snap = dataclasses.asdict(cfg)
    for key, value in snap.items():
        if isinstance(value, tuple):
            snap[key] = list(value)
    return snap


def _write_manifest(out_dir: Path, command: str, config_snapshot: dict,
                    dataset_path: Path | None, seeds: list[int],
                    artifacts: list[str], timings: dict) -> Path:
    manifest = {
        "command": command,
        "config": config_snapshot,
        "dataset_path": str(dataset_path) if dataset_path else None,
        "dataset_sha256": _sha256(dataset_path) if dataset_path else None,
        "seeds": seeds,
        "artifacts": artifacts,
        "timings": timings,
    }
    path = out_dir / f"{command}_manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _echo_config(cfg) -> None:
    print("CONFIG " + json.dumps(_config_snapshot(cfg), sort_keys=True))


def _write_records(path: Path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _report_record(report, extra: dict | None = None) -> dict:
    record = {
        "auc": report.auc, "ks": report.ks,
        "recall_at_10": report.recall_at_k, "k_percent": report.k_percent,
        "n_pos": report.n_pos, "n_neg": report.n_neg,
        "split": report.split, "seed": report.seed, "mode": report.mode,
    }
    if extra:
        record.update(extra)
    return record


def _load_split_dataset(parser, dataset_path: Path):
    if not dataset_path.exists():
        raise FileNotFoundError(f"dataset not found: {dataset_path}")
    ds = data.load_delimited(dataset_path)
    frac_valid, frac_test = _split_fractions(parser)
    ds = data.temporal_split(ds, frac_valid, frac_test)
    scaler = data.fit_standardize(ds)
    return data.apply_standardize(ds, scaler)


def _dataset_path(parser, args, out_dir: Path) -> Path:
    if getattr(args, "data", None):
        return Path(args.data)
    section = parser["dataset"] if parser.has_section("dataset") else {}
    if "file" in section:
        return Path(section["file"])
    return out_dir / "dataset.csv"


def cmd_generate(args) -> int:
    parser = _parse_config(Path(args.config))
    cfg = _dataset_config(parser, args.seed)
    out_dir = _out_dir(args)
    _echo_config(cfg)
    t0 = time.time()
    ds = data.generate_synthetic(cfg)
    dataset_path = _dataset_path(parser, args, out_dir)
    data.save_delimited(ds, dataset_path)
    timings = {"generate_s": time.time() - t0}
    manifest = _write_manifest(out_dir, "generate", _config_snapshot(cfg),
                               dataset_path, [cfg.seed],
                               [str(dataset_path)], timings)
    rate = float(np.mean(ds.y))
    print(f"wrote {ds.n} rows to {dataset_path} "
          f"(positive rate {rate:.4f})")
    print(f"manifest: {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    parser = _parse_config(Path(args.config))
    mode = args.mode
    if mode == "teacher":
        cfg = _train_config(parser, "teacher", args.seed, None)
    else:
        cfg = _train_config(parser, "student", args.seed, mode)
    out_dir = _out_dir(args)
    dataset_path = _dataset_path(parser, args, out_dir)
    ds = _load_split_dataset(parser, dataset_path)
    _echo_config(cfg)

    t0 = time.time()
    if mode == "teacher":
        model, trace = pipeline.train_teacher(ds, cfg)
        feature_mode = "in"
        model_path = out_dir / "teacher.mgkd"
    else:
        teacher = None
        if mode not in ("baseline_pre", "oracle"):
            teacher_path = Path(args.teacher or out_dir / "teacher.mgkd")
            if not teacher_path.exists():
                raise FileNotFoundError(
                    f"mode {mode!r} needs a teacher model: {teacher_path}")
            teacher, teacher_feat = modelio.load_model(teacher_path)
            if teacher_feat != "in":
                raise DataError(f"{teacher_path} is not an in-service model")
        model, trace = pipeline.train_student(ds, teacher, cfg)
        feature_mode = pipeline.feature_block_for_mode(mode)
        model_path = out_dir / f"student_{mode}.mgkd"
    train_s = time.time() - t0

    modelio.save_model(model, model_path, feature_mode)
    trace_path = out_dir / f"trace_{mode}.jsonl"
    records = [{"record": "epoch", "mode": mode, "seed": cfg.seed, **row}
               for row in trace.epochs]
    records.append({"record": "summary", "mode": mode, "seed": cfg.seed,
                    "best_epoch": trace.best_epoch,
                    "stop_reason": trace.stop_reason,
                    "epochs_run": len(trace.epochs)})
    _write_records(trace_path, records)

    manifest = _write_manifest(out_dir, f"train_{mode}",
                               _config_snapshot(cfg), dataset_path,
                               [cfg.seed], [str(model_path), str(trace_path)],
                               {"train_s": train_s})
    print(f"mode={mode} best_epoch={trace.best_epoch} "
          f"stop={trace.stop_reason} epochs={len(trace.epochs)}")
    print(f"model: {model_path}")
    print(f"trace: {trace_path}")
    print(f"manifest: {manifest}")
    return EXIT_OK


def cmd_eval(args) -> int:
    parser = _parse_config(Path(args.config)) if args.config \
        else configparser.ConfigParser()
    model_path = Path(args.model)
    if not model_path.exists():
        raise FileNotFoundError(f"model not found: {model_path}")
    out_dir = _out_dir(args)
    dataset_path = Path(args.data)
    ds = _load_split_dataset(parser, dataset_path)
    model, feature_mode = modelio.load_model(model_path)

    report = pipeline.evaluate_split(model, ds, args.split, feature_mode,
                                     mode=feature_mode)
    record = _report_record(report, {"record": "eval",
                                     "model": str(model_path)})
    results_path = out_dir / "eval_results.jsonl"
    _write_records(results_path, [record])
    _write_manifest(out_dir, "eval", {"split": args.split,
                                      "model": str(model_path)},
                    dataset_path, [], [str(results_path)], {})
    print(f"{'split':>10} {'AUC':>8} {'KS':>8} {'Recall@10':>10}")
    print(f"{report.split:>10} {report.auc:8.4f} {report.ks:8.4f} "
          f"{report.recall_at_k:10.4f}")
    print(f"results: {results_path}")
    return EXIT_OK


def _parse_seeds(arg: str | None, fallback: str = "0,1,2,3,4") -> list[int]:
    text = arg if arg else fallback
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None


def _ablate_point(payload):
    ds, cfg, seed, modes = payload
    return pipeline.run_ablation(ds, cfg, [seed], modes)


def cmd_ablate(args) -> int:
    parser = _parse_config(Path(args.config))
    cfg = _train_config(parser, "student", None, None)
    seeds = _parse_seeds(args.seeds)
    out_dir = _out_dir(args)
    dataset_path = _dataset_path(parser, args, out_dir)
    ds = _load_split_dataset(parser, dataset_path)
    _echo_config(cfg)

    t0 = time.time()
    modes = pipeline.ABLATION_MODES
    if args.jobs and args.jobs > 1:
        payloads = [(ds, cfg, seed, modes) for seed in seeds]
        reports = []
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for chunk in pool.map(_ablate_point, payloads):
                reports.extend(chunk)
    else:
        reports = pipeline.run_ablation(ds, cfg, seeds, modes)
    elapsed = time.time() - t0

    agg = pipeline.aggregate_reports(reports)
    records = [_report_record(r, {"record": "ablation_run"})
               for r in reports]
    for mode in modes:
        records.append({"record": "ablation_mode", "mode": mode,
                        **agg[mode]})
    ordering_ok = (agg["full"]["auc_mean"]
                   >= agg["pretrain_only"]["auc_mean"]
                   >= agg["baseline_pre"]["auc_mean"])
    records.append({"record": "ordering_check",
                    "check": "full >= pretrain_only >= baseline_pre",
                    "passed": bool(ordering_ok)})
    results_path = out_dir / "ablation_results.jsonl"
    _write_records(results_path, records)
    _write_manifest(out_dir, "ablate", _config_snapshot(cfg), dataset_path,
                    seeds, [str(results_path)], {"ablate_s": elapsed})

    print(f"{'mode':>14} {'AUC':>8} {'±':>7} {'KS':>8} {'Recall@10':>10}")
    for mode in sorted(modes, key=lambda m: -agg[m]["auc_mean"]):
        row = agg[mode]
        print(f"{mode:>14} {row['auc_mean']:8.4f} {row['auc_std']:7.4f} "
              f"{row['ks_mean']:8.4f} {row['recall_mean']:10.4f}")
    print("ordering check (full >= pretrain_only >= baseline_pre): "
          + ("PASS" if ordering_ok else "FAIL"))
    print(f"results: {results_path}")
    return EXIT_OK


def _sweep_point(payload):
    ds, cfg, seed, param, value = payload
    field_name = "lam" if param == "lambda" else param
    cfg_point = replace(cfg, seed=seed, **{field_name: value})
    teacher, _ = pipeline.train_teacher(ds, cfg_point)
    model, _ = pipeline.train_student(ds, teacher, cfg_point)
    report = pipeline.evaluate_split(model, ds, "test", "pre",
                                     seed=seed, mode=f"{param}={value}")
    return _report_record(report, {"record": "sweep_point",
                                   "param": param, "value": value})


def cmd_sweep(args) -> int:
    parser = _parse_config(Path(args.config))
    section = parser["sweep"] if parser.has_section("sweep") else {}
    param = args.param or section.get("param")
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep param must be one of {SWEEP_PARAMS}, "
                          f"got {param!r}")
    grid_text = args.grid or section.get("grid")
    if not grid_text:
        raise ConfigError("sweep needs a grid (--grid or [sweep] grid)")
    try:
        grid = [float(v) for v in grid_text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad grid value in {grid_text!r}") from None
    cfg = _train_config(parser, "student", None, "full")
    for value in grid:
        field_name = "lam" if param == "lambda" else param
        replace(cfg, **{field_name: value})  # validates the grid value

    seeds = _parse_seeds(args.seeds, section.get("seeds", "0,1,2,3,4"))
    out_dir = _out_dir(args)
    dataset_path = _dataset_path(parser, args, out_dir)
    ds = _load_split_dataset(parser, dataset_path)
    _echo_config(cfg)

    t0 = time.time()
    payloads = [(ds, cfg, seed, param, value)
                for value in grid for seed in seeds]
    if args.jobs and args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_sweep_point, payloads))
    else:
        records = [_sweep_point(p) for p in payloads]
    elapsed = time.time() - t0

    results_path = out_dir / f"sweep_{param}_results.jsonl"
    _write_records(results_path, records)
    _write_manifest(out_dir, "sweep", _config_snapshot(cfg), dataset_path,
                    seeds, [str(results_path)],
                    {"sweep_s": elapsed})

    print(f"{param:>8} {'seed':>5} {'AUC':>8} {'KS':>8} {'Recall@10':>10}")
    for record in records:
        print(f"{record['value']:8.3f} {record['seed']:5d} "
              f"{record['auc']:8.4f} {record['ks']:8.4f} "
              f"{record['recall_at_10']:10.4f}")
    print(f"results: {results_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mgkd",
        description="Two-phase teacher-student distillation workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data_flag=True):
        p.add_argument("--config", required=False)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        if data_flag:
            p.add_argument("--data", default=None)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train teacher or student")
    common(p)
    p.add_argument("--mode", required=True,
                   choices=("teacher", *pipeline.MODES))
    p.add_argument("--teacher", default=None,
                   help="path to the teacher model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a split with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test",
                   choices=("train", "valid", "test"))
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the six-mode ablation grid")
    common(p)
    p.add_argument("--seeds", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="sweep alpha/beta/lambda/tau")
    common(p)
    p.add_argument("--param", choices=SWEEP_PARAMS, default=None)
    p.add_argument("--grid", default=None)
    p.add_argument("--seeds", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command != "eval" and not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING_ARTIFACT
    except (DimensionError, ParseError, DataError, SplitError,
            MetricError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
