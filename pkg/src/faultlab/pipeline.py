"""End-to-end glue: dataset -> frames -> trained model -> evaluation inputs."""

from __future__ import annotations

from dataclasses import replace

from .config import PipelineConfig
from .dataset import read_csv
from .framing import FrameSet, frame_runs, fit_stats, standardize_set
from .nn.model import FaultCNN1D
from .synth import generate_sweep
from .training import TrainReport, train


def synthesize_frames(cfg: PipelineConfig, sweep=None) -> FrameSet:
    """Synthesize a sweep directly into (unstandardized) frames."""
    sweep = cfg.sweep if sweep is None else sweep
    return frame_runs(generate_sweep(sweep, cfg.motor), cfg.framing)


def frames_from_csv(path, cfg: PipelineConfig) -> FrameSet:
    """Read a dataset file and frame every run."""
    return frame_runs(read_csv(path), cfg.framing)


def train_on_frames(raw_frames: FrameSet, cfg: PipelineConfig
                    ) -> tuple[FaultCNN1D, TrainReport]:
    """Fit channel stats, standardize, train, and attach stats to the model."""
    stats = fit_stats(raw_frames)
    standardized = standardize_set(raw_frames, stats, cfg.framing.eps)
    model = FaultCNN1D(seed=cfg.model_seed)
    training = replace(cfg.training, val_fraction=cfg.split.val_fraction)
    report = train(standardized, model, training)
    model.stats = stats
    return model, report


def standardized_test_frames(cfg: PipelineConfig, model: FaultCNN1D,
                             sweep=None) -> FrameSet:
    """Midpoint-speed test frames standardized with the model's stats."""
    if model.stats is None:
        raise ValueError("model carries no channel statistics")
    sweep = cfg.test_sweep() if sweep is None else sweep
    raw = synthesize_frames(cfg, sweep)
    return standardize_set(raw, model.stats, cfg.framing.eps)
