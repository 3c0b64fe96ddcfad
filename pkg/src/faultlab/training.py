"""Optimization loop: smoothed cross-entropy, AdamW, cosine LR, clipping.

Training is fully reproducible from the config seed and the model seed:
the stratified split, the per-epoch shuffles, and the dropout stream are
all driven by seeded generators, and the backward kernels are
deterministic under a fixed BLAS thread count (pinned to one here).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .framing import FrameSet
from .nn.layers import softmax
from .nn.model import FaultCNN1D, parameter_count


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the optimization protocol."""

    lr0: float = 1e-3
    lr_min: float = 1e-6
    t_max: int = 10_000             # cosine horizon, in optimizer iterations
    weight_decay: float = 1e-4
    label_smoothing: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 256
    max_iterations: int = 10_000
    val_every: int = 500
    val_fraction: float = 0.2
    clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.lr_min >= self.lr0:
            raise ConfigError("lr_min must be below lr0")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError("label_smoothing must be in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be > 0")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in (0, 1)")


@dataclass
class OptimizerState:
    """AdamW first/second moments and the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
        )


def smoothing_targets(true_class, eps_ls, n_classes):
    """Smoothed one-hot target row(s): (1 - eps) * one_hot + eps / C."""
    labels = np.atleast_1d(np.asarray(true_class, dtype=np.int64))
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ConfigError(f"class index out of range [0, {n_classes})")
    q = np.full((labels.shape[0], n_classes), eps_ls / n_classes)
    q[np.arange(labels.shape[0]), labels] += 1.0 - eps_ls
    return q


def ce_label_smoothing(probabilities, true_class, eps_ls):
    """Label-smoothed cross-entropy in nats; the mean over a batch.

    Accepts one probability row (C,) with a scalar class, or a batch (B, C)
    with a label vector. Probabilities are clamped at 1e-12 before the log.
    """
    probs = np.atleast_2d(np.asarray(probabilities, dtype=np.float64))
    q = smoothing_targets(true_class, eps_ls, probs.shape[1])
    losses = -(q * np.log(np.clip(probs, 1e-12, None))).sum(axis=1)
    return float(losses.mean())


def cosine_lr(t, cfg: TrainConfig) -> float:
    """Cosine annealing from lr0 (t = 0) to lr_min (t >= t_max)."""
    if t >= cfg.t_max:
        return cfg.lr_min
    return cfg.lr_min + 0.5 * (cfg.lr0 - cfg.lr_min) * (
        1.0 + math.cos(math.pi * t / cfg.t_max))


def clip_global_norm(grads: dict[str, np.ndarray], clip_norm: float):
    """Scale all gradients in place so the global L2 norm is <= clip_norm.

    Returns:
        (grads, global_norm_before_clipping)
    """
    total = 0.0
    for g in grads.values():
        total += float(np.vdot(g, g))
    norm = math.sqrt(total)
    if norm > clip_norm:
        scale = clip_norm / norm
        for g in grads.values():
            g *= scale
    return grads, norm


def adamw_step(params, grads, opt: OptimizerState, lr, cfg: TrainConfig):
    """One decoupled-weight-decay Adam update, in place.

    Raises:
        NumericalError: if any gradient is non-finite (the step is aborted
            before touching parameters or moments).
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in {name}")
    opt.t += 1
    bc1 = 1.0 - cfg.beta1 ** opt.t
    bc2 = 1.0 - cfg.beta2 ** opt.t
    for name, theta in params.items():
        g = grads[name].astype(theta.dtype, copy=False)
        m = opt.m[name]
        v = opt.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
        theta -= lr * update + lr * cfg.weight_decay * theta
    return params, opt


@dataclass
class TrainReport:
    """Outcome of one training run."""

    best_iteration: int
    best_val_accuracy: float
    final_train_accuracy: float
    final_val_accuracy: float
    curves: list[dict] = field(default_factory=list)
    wall_time_s: float = 0.0
    param_counts: tuple[int, int, int] = (0, 0, 0)

    @property
    def generalization_gap(self) -> float:
        return abs(self.final_train_accuracy - self.final_val_accuracy)

    def curves_rows(self):
        header = ("iteration", "lr", "train_loss", "val_loss", "val_acc")
        yield header
        for row in self.curves:
            yield tuple(row[k] for k in header)

    def write_curves(self, path) -> None:
        with open(path, "w") as fh:
            for row in self.curves_rows():
                fh.write(",".join(
                    f"{v:.8g}" if isinstance(v, float) else str(v) for v in row))
                fh.write("\n")

    def summary_text(self) -> str:
        lines = [
            "training summary",
            f"  final training accuracy   {self.final_train_accuracy * 100:.2f}%",
            f"  final validation accuracy {self.final_val_accuracy * 100:.2f}%",
            f"  generalization gap        {self.generalization_gap * 100:.2f}%",
            f"  best validation accuracy  {self.best_val_accuracy * 100:.2f}%"
            f" (iteration {self.best_iteration})",
            f"  parameters                {self.param_counts[0]:,} learnable /"
            f" {self.param_counts[1]:,} total / {self.param_counts[2]:,} bytes FP32",
            f"  wall time                 {self.wall_time_s / 60:.1f} min",
        ]
        return "\n".join(lines)


def stratified_split(labels: np.ndarray, val_fraction: float, seed: int):
    """Per-class shuffled split; returns (train_idx, val_idx)."""
    rng = np.random.default_rng(seed)
    train_parts, val_parts = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.shape[0])]
        n_val = int(idx.shape[0] * val_fraction)
        val_parts.append(idx[:n_val])
        train_parts.append(idx[n_val:])
    train_idx = np.sort(np.concatenate(train_parts))
    val_idx = np.sort(np.concatenate(val_parts))
    if train_idx.size == 0 or val_idx.size == 0:
        raise ConfigError("stratified split produced an empty partition")
    return train_idx, val_idx


def _to_rows(values: np.ndarray) -> np.ndarray:
    """(N, C, T) frames -> (N, T, C) row-major copy for fast batch slicing."""
    return np.ascontiguousarray(values.transpose(0, 2, 1))


def _accuracy_and_loss(model, rows_data, labels, frame_len, cfg, batch_size=256):
    hits = 0
    loss_sum = 0.0
    n = labels.shape[0]
    channels = rows_data.shape[2]
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        block = rows_data[start:stop].reshape(-1, channels)
        logits = model.forward_rows(block, stop - start, frame_len, train=False)
        probs = softmax(logits, axis=-1)
        hits += int((np.argmax(logits, axis=1) == labels[start:stop]).sum())
        loss_sum += ce_label_smoothing(
            probs, labels[start:stop], cfg.label_smoothing) * (stop - start)
    return hits / n, loss_sum / n


def train(frames: FrameSet, model: FaultCNN1D, cfg: TrainConfig) -> TrainReport:
    """Run the optimization protocol and leave the best checkpoint in ``model``.

    ``frames`` must already be standardized. Validation accuracy is
    measured every ``val_every`` iterations (and at the final iteration);
    the snapshot with the highest validation accuracy wins, earlier
    iteration breaking ties.
    """
    if len(frames) == 0:
        raise ConfigError("cannot train on an empty frame set")
    configure_compute()
    t_start = time.perf_counter()
    train_idx, val_idx = stratified_split(frames.labels, cfg.val_fraction, cfg.seed)
    frame_len = frames.values.shape[2]
    channels = frames.values.shape[1]
    train_rows = _to_rows(frames.values[train_idx])
    val_rows = _to_rows(frames.values[val_idx])
    y_train = frames.labels[train_idx]
    y_val = frames.labels[val_idx]

    params = model.parameters()
    opt = OptimizerState.for_params(params)
    shuffle_rng = np.random.default_rng(cfg.seed + 1)
    order = shuffle_rng.permutation(train_idx.shape[0])
    cursor = 0

    best = {"iteration": 0, "val_acc": -1.0, "snapshot": None}
    curves: list[dict] = []
    loss_acc = 0.0
    loss_count = 0

    for iteration in range(1, cfg.max_iterations + 1):
        if cursor + cfg.batch_size > order.shape[0]:
            take = order[cursor:]
            order = shuffle_rng.permutation(order.shape[0])
            cursor = 0
            if take.size == 0:
                take = order[:cfg.batch_size]
                cursor = cfg.batch_size
        else:
            take = order[cursor:cursor + cfg.batch_size]
            cursor += cfg.batch_size
        batch = take
        y = y_train[batch]
        interior = model.conv1.input_interior(batch.shape[0], frame_len, model.dtype)
        np.take(train_rows, batch, axis=0,
                out=interior.reshape(batch.shape[0], frame_len, channels))

        logits = model.forward_rows(None, batch.shape[0], frame_len,
                                    train=True, prefilled=True)
        probs = softmax(logits, axis=-1)
        loss = ce_label_smoothing(probs, y, cfg.label_smoothing)
        if not math.isfinite(loss):
            raise NumericalError(
                f"training diverged at iteration {iteration}: loss={loss}")
        loss_acc += loss
        loss_count += 1

        q = smoothing_targets(y, cfg.label_smoothing, model.n_classes)
        dlogits = ((probs - q) / batch.shape[0]).astype(model.dtype)
        model.backward(dlogits)

        lr = cosine_lr(iteration - 1, cfg)
        grads, _ = clip_global_norm(model.gradients(), cfg.clip_norm)
        adamw_step(params, grads, opt, lr, cfg)

        if iteration % cfg.val_every == 0 or iteration == cfg.max_iterations:
            val_acc, val_loss = _accuracy_and_loss(
                model, val_rows, y_val, frame_len, cfg)
            curves.append({
                "iteration": iteration,
                "lr": lr,
                "train_loss": loss_acc / max(loss_count, 1),
                "val_loss": val_loss,
                "val_acc": val_acc,
            })
            loss_acc = 0.0
            loss_count = 0
            if val_acc > best["val_acc"]:
                best.update(iteration=iteration, val_acc=val_acc,
                            snapshot=model.snapshot())

    final_train_acc, _ = _accuracy_and_loss(
        model, train_rows, y_train, frame_len, cfg)
    final_val_acc = curves[-1]["val_acc"]
    model.restore(best["snapshot"])

    return TrainReport(
        best_iteration=best["iteration"],
        best_val_accuracy=best["val_acc"],
        final_train_accuracy=final_train_acc,
        final_val_accuracy=final_val_acc,
        curves=curves,
        wall_time_s=time.perf_counter() - t_start,
        param_counts=parameter_count(model),
    )
