"""Post-training evaluation: confusion/F1, cross-speed grid, severity sweep,
single-frame latency, and a KNN sanity baseline.

All evaluation data flows through the same framing and standardization as
training; test frames always reuse the training-set channel statistics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .faults import FAULT_NAMES, FaultClass
from .framing import ChannelStats, FrameSet, FramingConfig, frame_runs, standardize_set
from .nn.model import FaultCNN1D, predict_classes
from .nn.parallel import blas_threads
from .synth import SweepConfig, build_scenario, run_seed, synthesize_run

#: Reference single-frame inference time reported for the embedded target,
#: in milliseconds; informational comparison only, not a pass/fail bound.
EMBEDDED_REFERENCE_MS = 0.00079


@dataclass
class ConfusionMatrix:
    """Count matrix indexed [true, predicted] over the five classes."""

    counts: np.ndarray

    @classmethod
    def from_predictions(cls, predictions, labels, n_classes=5):
        predictions = np.asarray(predictions, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        if predictions.shape != labels.shape or predictions.size == 0:
            raise ConfigError("predictions and labels must be equal-length, nonempty")
        counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(counts, (labels, predictions), 1)
        return cls(counts=counts)

    @property
    def normalized(self) -> np.ndarray:
        """Row-normalized recall matrix; all-zero rows stay zero."""
        sums = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, sums, where=sums > 0,
                         out=np.zeros(self.counts.shape, dtype=np.float64))

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / float(self.counts.sum())


@dataclass
class ClassMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    """Aggregated evaluation outcome; optional sections stay None."""

    accuracy: float = 0.0
    weighted_f1: float = 0.0
    per_class: list[ClassMetrics] = field(default_factory=list)
    confusion: ConfusionMatrix | None = None
    per_speed: dict | None = None          # rpm -> {class name: acc, "overall": acc}
    severity_curves: dict | None = None    # class name -> [(severity, acc)]
    latency: dict | None = None

    def summary_text(self) -> str:
        lines = [f"accuracy     {self.accuracy * 100:.2f}%",
                 f"weighted F1  {self.weighted_f1:.4f}"]
        for m in self.per_class:
            lines.append(f"  {m.name:5s} P {m.precision:.3f}  R {m.recall:.3f}"
                         f"  F1 {m.f1:.3f}  n={m.support}")
        if self.latency:
            lines.append(
                f"latency mean {self.latency['mean_ms']:.4f} ms "
                f"(p50 {self.latency['p50_ms']:.4f}, p99 {self.latency['p99_ms']:.4f}; "
                f"embedded reference {EMBEDDED_REFERENCE_MS} ms)")
        return "\n".join(lines)


def confusion_and_f1(predictions, labels, n_classes=5):
    """Confusion matrix plus accuracy, per-class P/R/F1, and weighted F1.

    Per-class F1 uses the zero convention when precision + recall = 0;
    weighted F1 is the support-weighted mean over classes.
    """
    cm = ConfusionMatrix.from_predictions(predictions, labels, n_classes)
    counts = cm.counts
    per_class = []
    weighted = 0.0
    total = counts.sum()
    for c in range(n_classes):
        tp = counts[c, c]
        support = counts[c, :].sum()
        predicted = counts[:, c].sum()
        precision = tp / predicted if predicted else 0.0
        recall = tp / support if support else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall > 0 else 0.0)
        per_class.append(ClassMetrics(FAULT_NAMES[c], float(precision),
                                      float(recall), float(f1), int(support)))
        weighted += support / total * f1
    report = EvalReport(accuracy=cm.accuracy, weighted_f1=float(weighted),
                        per_class=per_class, confusion=cm)
    return cm, report


def evaluate_frames(model: FaultCNN1D, frames: FrameSet,
                    batch_size: int = 256) -> EvalReport:
    """Classify standardized frames and report confusion/F1 metrics."""
    preds = predict_classes(model, frames.values, batch_size)
    _, report = confusion_and_f1(preds, frames.labels, model.n_classes)
    return report


def cross_speed_accuracy(model: FaultCNN1D, frames: FrameSet,
                         batch_size: int = 256) -> dict:
    """Per-(class, speed) accuracy over frames grouped by rpm.

    Raises:
        ConfigError: if the frame set is empty.
    """
    if len(frames) == 0:
        raise ConfigError("cross-speed evaluation needs a nonempty frame set")
    preds = predict_classes(model, frames.values, batch_size)
    grid: dict = {}
    for rpm in sorted(set(frames.rpms.tolist())):
        at_speed = frames.rpms == rpm
        row = {}
        for fc in FaultClass:
            sel = at_speed & (frames.labels == int(fc))
            if sel.any():
                row[fc.csv_name] = float((preds[sel] == int(fc)).mean())
        row["overall"] = float((preds[at_speed] == frames.labels[at_speed]).mean())
        grid[float(rpm)] = row
    return grid


def severity_sweep(model: FaultCNN1D, severities, params, sweep_cfg: SweepConfig,
                   framing_cfg: FramingConfig, stats: ChannelStats,
                   speeds=None, seed: int | None = None) -> dict:
    """Detection accuracy per class as the fault severity is scaled.

    Fresh runs are synthesized per (class, speed) with seeds independent
    of severity, so the healthy curve is exactly flat and faulted curves
    differ only through the scaled perturbations.
    """
    speeds = tuple(speeds) if speeds is not None else sweep_cfg.speeds
    base_seed = sweep_cfg.seed if seed is None else seed
    curves = {fc.csv_name: [] for fc in FaultClass}
    for fc in FaultClass:
        for severity in severities:
            hits = 0
            total = 0
            for i_speed, rpm in enumerate(speeds):
                scen = build_scenario(
                    sweep_cfg, rpm, fc, severity,
                    run_seed(base_seed, int(fc), i_speed))
                run = synthesize_run(scen, params)
                frames = standardize_set(
                    frame_runs([run], framing_cfg), stats, framing_cfg.eps)
                preds = predict_classes(model, frames.values)
                hits += int((preds == int(fc)).sum())
                total += preds.shape[0]
            curves[fc.csv_name].append((float(severity), hits / total))
    return curves


def latency_benchmark(model: FaultCNN1D, n_trials: int = 10_000,
                      warmup: int = 100, frame=None) -> dict:
    """Single-frame eval-mode forward timing, single-threaded.

    Returns mean/p50/p99 in milliseconds plus derived throughput; the
    embedded reference figure is attached for report formatting.
    """
    if frame is None:
        frame = np.zeros((model.in_channels, 1000), dtype=model.dtype)
    model.eval()
    times = np.empty(n_trials)
    with blas_threads(1):
        for _ in range(warmup):
            model.forward(frame)
        for i in range(n_trials):
            t0 = time.perf_counter_ns()
            model.forward(frame)
            times[i] = time.perf_counter_ns() - t0
    times /= 1e6
    mean = float(times.mean())
    return {
        "mean_ms": mean,
        "p50_ms": float(np.percentile(times, 50)),
        "p99_ms": float(np.percentile(times, 99)),
        "throughput_per_s": 1000.0 / mean,
        "n_trials": n_trials,
        "reference_ms": EMBEDDED_REFERENCE_MS,
    }


def frame_features(values: np.ndarray) -> np.ndarray:
    """24-feature reduction per frame: per-channel mean, population std,
    and dominant non-DC spectral magnitude (2/T-scaled)."""
    means = values.mean(axis=2)
    stds = values.std(axis=2)
    spectrum = np.abs(np.fft.rfft(values, axis=2))[:, :, 1:]
    dominant = spectrum.max(axis=2) * (2.0 / values.shape[2])
    return np.concatenate([means, stds, dominant], axis=1).astype(np.float64)


def knn_baseline(train_frames: FrameSet, test_frames: FrameSet, k: int = 7,
                 chunk: int = 1024):
    """k-nearest-neighbor classification on the 24-feature reduction.

    Majority vote over the k nearest Euclidean neighbors; ties are broken
    by the class of the nearest neighbor among the tied classes.

    Returns:
        (predictions, EvalReport)
    """
    if k > len(train_frames):
        raise ConfigError(f"k={k} exceeds training set size {len(train_frames)}")
    x_train = frame_features(train_frames.values)
    x_test = frame_features(test_frames.values)
    y_train = train_frames.labels
    preds = np.empty(len(test_frames), dtype=np.int64)
    train_sq = (x_train**2).sum(axis=1)
    n_classes = int(y_train.max()) + 1
    for start in range(0, x_test.shape[0], chunk):
        block = x_test[start:start + chunk]
        d2 = (block**2).sum(axis=1)[:, None] + train_sq[None, :] - 2.0 * (block @ x_train.T)
        near = np.argpartition(d2, k - 1, axis=1)[:, :k]
        for i in range(block.shape[0]):
            idx = near[i][np.argsort(d2[i, near[i]], kind="stable")]
            votes = np.bincount(y_train[idx], minlength=n_classes)
            top = votes.max()
            tied = np.flatnonzero(votes == top)
            if tied.shape[0] == 1:
                preds[start + i] = tied[0]
            else:
                for j in idx:
                    if y_train[j] in tied:
                        preds[start + i] = y_train[j]
                        break
    _, report = confusion_and_f1(preds, test_frames.labels, n_classes=5)
    return preds, report


# -- report files -------------------------------------------------------------

def write_confusion_csv(cm: ConfusionMatrix, path) -> None:
    with open(path, "w") as fh:
        fh.write("true\\pred," + ",".join(FAULT_NAMES) + "\n")
        for i, name in enumerate(FAULT_NAMES):
            fh.write(name + "," + ",".join(str(int(v)) for v in cm.counts[i]) + "\n")


def write_cross_speed_csv(grid: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write("rpm," + ",".join(FAULT_NAMES) + ",overall\n")
        for rpm in sorted(grid):
            row = grid[rpm]
            cells = [f"{row.get(name, float('nan')):.6f}" for name in FAULT_NAMES]
            fh.write(f"{rpm:g}," + ",".join(cells) + f",{row['overall']:.6f}\n")


def write_severity_csv(curves: dict, path) -> None:
    severities = [s for s, _ in next(iter(curves.values()))]
    with open(path, "w") as fh:
        fh.write("severity," + ",".join(FAULT_NAMES) + "\n")
        for row_i, severity in enumerate(severities):
            cells = [f"{curves[name][row_i][1]:.6f}" for name in FAULT_NAMES]
            fh.write(f"{severity:g}," + ",".join(cells) + "\n")


def plot_report(report: EvalReport, out_dir) -> list:
    """Optional static figures (confusion heatmap, severity curves,
    cross-speed grid); requires matplotlib."""
    try:
        import matplotlib
    except ImportError as exc:
        raise ConfigError("plotting requires matplotlib (install extra 'plots')") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from pathlib import Path

    out_dir = Path(out_dir)
    written = []
    if report.confusion is not None:
        fig, ax = plt.subplots(figsize=(5, 4))
        im = ax.imshow(report.confusion.normalized, cmap="Blues", vmin=0, vmax=1)
        ax.set_xticks(range(5), FAULT_NAMES)
        ax.set_yticks(range(5), FAULT_NAMES)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        fig.colorbar(im)
        path = out_dir / "confusion.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    if report.severity_curves:
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, curve in report.severity_curves.items():
            xs, ys = zip(*curve)
            ax.plot(xs, ys, marker="o", label=name)
        ax.set_xlabel("fault severity")
        ax.set_ylabel("detection accuracy")
        ax.set_ylim(0, 1.02)
        ax.legend()
        path = out_dir / "severity.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    if report.per_speed:
        speeds = sorted(report.per_speed)
        matrix = np.array([[report.per_speed[r].get(n, np.nan) for n in FAULT_NAMES]
                           for r in speeds])
        fig, ax = plt.subplots(figsize=(6, 8))
        im = ax.imshow(matrix, aspect="auto", cmap="viridis", vmin=0, vmax=1)
        ax.set_xticks(range(5), FAULT_NAMES)
        ax.set_yticks(range(len(speeds)), [f"{r:g}" for r in speeds])
        ax.set_xlabel("class")
        ax.set_ylabel("rpm")
        fig.colorbar(im)
        path = out_dir / "cross_speed.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written
