"""Command-line entry point: generate | train | eval | bench | infer.

Configuration precedence: built-in defaults < YAML config file (--config
or $FAULTLAB_CONFIG) < --set section.key=value < dedicated flags.
Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import load_config
from .dataset import CSV_HEADER, write_csv
from .errors import ConfigError, DataError, FaultLabError
from .evaluation import (
    cross_speed_accuracy,
    evaluate_frames,
    knn_baseline,
    latency_benchmark,
    plot_report,
    severity_sweep,
    write_confusion_csv,
    write_cross_speed_csv,
    write_severity_csv,
)
from .faults import FAULT_NAMES, FaultClass
from .framing import fit_stats, standardize_set
from .nn import load_checkpoint, parameter_count, save_checkpoint
from .nn.layers import softmax
from .nn.parallel import set_blas_threads, set_workers
from .synth import generate_sweep
from . import pipeline

CONFIG_ENV = "FAULTLAB_CONFIG"


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _add_common(sub):
    sub.add_argument("--config", default=None,
                     help=f"YAML config path (default: ${CONFIG_ENV})")
    sub.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="SECTION.KEY=VALUE",
                     help="override any config field (repeatable)")
    sub.add_argument("--threads", type=int, default=None,
                     help="cap worker and BLAS threads")


def _load(args):
    path = args.config or os.environ.get(CONFIG_ENV)
    cfg = load_config(path, args.overrides)
    if args.threads:
        set_workers(args.threads)
        set_blas_threads(args.threads)
    return cfg


def cmd_generate(args) -> int:
    overrides = list(args.overrides)
    if args.speeds:
        overrides.append(f"sweep.speeds=[{args.speeds}]")
    if args.faults:
        overrides.append(f"sweep.faults=[{args.faults}]")
    if args.seed is not None:
        overrides.append(f"sweep.seed={args.seed}")
    if args.snr_db is not None:
        overrides.append(f"sweep.snr_db={args.snr_db}")
    args.overrides = overrides
    cfg = _load(args)
    runs = 0

    def counted():
        nonlocal runs
        for run in generate_sweep(cfg.sweep, cfg.motor):
            runs += 1
            yield run

    t0 = time.perf_counter()
    rows = write_csv(counted(), args.out)
    elapsed = time.perf_counter() - t0
    print(f"{runs} runs, {rows:,} rows -> {args.out} ({elapsed:.1f} s)")
    if args.hash:
        print(f"sha256 {_sha256(args.out)}")
    return 0


def cmd_train(args) -> int:
    overrides = list(args.overrides)
    if args.iterations is not None:
        overrides.append(f"training.max_iterations={args.iterations}")
        overrides.append(f"training.t_max={args.iterations}")
    if args.seed is not None:
        overrides.append(f"training.seed={args.seed}")
    args.overrides = overrides
    cfg = _load(args)
    if not os.path.exists(args.data):
        raise DataError(f"dataset not found: {args.data}")
    raw = pipeline.frames_from_csv(args.data, cfg)
    print(f"loaded {len(raw):,} frames from {args.data}")
    model, report = pipeline.train_on_frames(raw, cfg)
    learnable, total, size = parameter_count(model)
    print(f"model parameters: {learnable:,} learnable, {total:,} total "
          f"({size:,} bytes FP32)")
    save_checkpoint(model, args.out)
    print(f"checkpoint -> {args.out}")
    if args.curves:
        report.write_curves(args.curves)
        print(f"curves -> {args.curves}")
    print(report.summary_text())
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    model = load_checkpoint(args.checkpoint)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.data:
        raw = pipeline.frames_from_csv(args.data, cfg)
        frames = standardize_set(raw, model.stats, cfg.framing.eps)
    else:
        frames = pipeline.standardized_test_frames(cfg, model)
    report = evaluate_frames(model, frames, cfg.evaluation.batch_size)
    write_confusion_csv(report.confusion, out_dir / "confusion.csv")

    if args.cross_speed:
        report.per_speed = cross_speed_accuracy(model, frames,
                                                cfg.evaluation.batch_size)
        write_cross_speed_csv(report.per_speed, out_dir / "cross_speed.csv")
    if args.severity_sweep:
        report.severity_curves = severity_sweep(
            model, cfg.evaluation.severities, cfg.motor, cfg.sweep,
            cfg.framing, model.stats, speeds=cfg.evaluation.severity_speeds,
            seed=cfg.evaluation.severity_seed)
        write_severity_csv(report.severity_curves, out_dir / "severity.csv")
    if args.knn:
        train_raw = (pipeline.frames_from_csv(args.knn_train, cfg)
                     if args.knn_train else pipeline.synthesize_frames(cfg))
        train_frames = standardize_set(train_raw, model.stats, cfg.framing.eps)
        _, knn_report = knn_baseline(train_frames, frames, cfg.evaluation.knn_k)
        print(f"KNN (k={cfg.evaluation.knn_k}) accuracy "
              f"{knn_report.accuracy * 100:.2f}%, weighted F1 "
              f"{knn_report.weighted_f1:.4f}")
    print(report.summary_text())
    (out_dir / "summary.txt").write_text(report.summary_text() + "\n")
    if args.plots:
        for path in plot_report(report, out_dir):
            print(f"plot -> {path}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load(args)
    model = load_checkpoint(args.checkpoint)
    stats = latency_benchmark(model, n_trials=args.trials or
                              cfg.evaluation.latency_trials,
                              warmup=cfg.evaluation.latency_warmup)
    print(f"single-frame forward over {stats['n_trials']:,} trials:")
    print(f"  mean {stats['mean_ms']:.4f} ms | p50 {stats['p50_ms']:.4f} ms "
          f"| p99 {stats['p99_ms']:.4f} ms")
    print(f"  throughput {stats['throughput_per_s']:,.0f} frames/s")
    print(f"  embedded reference {stats['reference_ms']} ms (informational)")
    return 0


def cmd_infer(args) -> int:
    cfg = _load(args)
    model = load_checkpoint(args.checkpoint)
    if model.stats is None:
        raise DataError("checkpoint carries no channel statistics")
    frame = _read_frame_csv(args.frame, cfg.framing.frame_len)
    if args.rpm is None:
        raise ConfigError("--rpm is required to append the speed channel")
    from .framing import append_rpm_channel, standardize

    augmented = append_rpm_channel(frame, args.rpm, cfg.framing.n_max)
    tensor = standardize(augmented, model.stats, cfg.framing.eps, rpm=args.rpm)
    model.eval()
    posteriors = softmax(model.forward(tensor.values), axis=-1)
    winner = FaultClass(int(np.argmax(posteriors)))
    print(f"class: {winner.csv_name}")
    for name, p in zip(FAULT_NAMES, posteriors):
        print(f"  P({name}) = {p:.6f}")
    return 0


def _read_frame_csv(path, frame_len: int) -> np.ndarray:
    """Raw 7-channel frame file: header torque,ia,...,vc and frame_len rows."""
    if not os.path.exists(path):
        raise DataError(f"frame file not found: {path}")
    expected = CSV_HEADER[2:]
    with open(path) as fh:
        header = tuple(fh.readline().rstrip("\n").split(","))
        if header != expected:
            raise DataError(f"{path}: expected header {','.join(expected)!r}")
        try:
            rows = [[float(v) for v in line.rstrip("\n").split(",")]
                    for line in fh if line.strip()]
        except ValueError as exc:
            raise DataError(f"{path}: unparseable frame value ({exc})") from exc
    data = np.asarray(rows, dtype=np.float64)
    if data.ndim != 2 or data.shape != (frame_len, len(expected)):
        raise DataError(f"{path}: expected {frame_len} x {len(expected)} values, "
                        f"got {data.shape}")
    return data.T


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faultlab",
        description="IPMSM fault waveform lab: dataset synthesis, CNN "
                    "training, and diagnostic evaluation")
    subs = parser.add_subparsers(dest="command", required=True)

    g = subs.add_parser("generate", help="synthesize the dataset CSV")
    _add_common(g)
    g.add_argument("--out", required=True, help="output CSV path")
    g.add_argument("--speeds", help="comma-separated rpm list")
    g.add_argument("--faults", help="comma-separated fault names")
    g.add_argument("--seed", type=int)
    g.add_argument("--snr-db", type=float, dest="snr_db")
    g.add_argument("--hash", action="store_true", help="print file sha256")
    g.set_defaults(func=cmd_generate)

    t = subs.add_parser("train", help="train the classifier on a dataset CSV")
    _add_common(t)
    t.add_argument("--data", required=True, help="dataset CSV path")
    t.add_argument("--out", required=True, help="checkpoint output path")
    t.add_argument("--curves", help="training-curves CSV output path")
    t.add_argument("--iterations", type=int, help="override max iterations")
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = subs.add_parser("eval", help="evaluate a trained checkpoint")
    _add_common(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", help="dataset CSV to evaluate (default: "
                                  "synthesized midpoint-speed test set)")
    e.add_argument("--out-dir", default="eval_out")
    e.add_argument("--cross-speed", action="store_true",
                   help="emit the per-speed accuracy grid")
    e.add_argument("--severity-sweep", action="store_true",
                   help="emit detection-vs-severity curves")
    e.add_argument("--knn", action="store_true",
                   help="also run the KNN baseline on the same partition")
    e.add_argument("--knn-train", help="training CSV for the KNN baseline")
    e.add_argument("--plots", action="store_true", help="write PNG figures")
    e.set_defaults(func=cmd_eval)

    b = subs.add_parser("bench", help="single-frame inference latency")
    _add_common(b)
    b.add_argument("--checkpoint", required=True)
    b.add_argument("--trials", type=int)
    b.set_defaults(func=cmd_bench)

    i = subs.add_parser("infer", help="classify one raw 7-channel frame")
    _add_common(i)
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--frame", required=True, help="CSV frame file")
    i.add_argument("--rpm", type=float, help="shaft speed of the frame")
    i.set_defaults(func=cmd_infer)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FaultLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
