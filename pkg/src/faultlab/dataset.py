"""CSV persistence of synthesized runs and the train/test speed partition.

Schema (one row per sample): ``rpm,fault,torque,ia,ib,ic,va,vb,vc`` with
rpm as a signed integer, the fault-class name, and six-decimal fixed-point
signal values. Output is byte-stable: '.' decimal separator, no locale
formatting, no thousands separators.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError
from .faults import FAULT_NAMES, FaultClass
from .synth import CHANNEL_NAMES, SignalRun

CSV_HEADER = ("rpm", "fault") + CHANNEL_NAMES
FLOAT_FORMAT = "%.6f"


@dataclass(frozen=True)
class SpeedSplit:
    """Disjoint train/test speed sets plus the frame-level validation share."""

    train_speeds: tuple[float, ...]
    test_speeds: tuple[float, ...]
    val_fraction: float = 0.2

    def __post_init__(self):
        if set(self.train_speeds) & set(self.test_speeds):
            raise ConfigError("train and test speeds must be disjoint")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in (0, 1), got {self.val_fraction}")


def make_speed_split(grid_step: float = 150.0, n_max: float = 2700.0,
                     val_fraction: float = 0.2) -> SpeedSplit:
    """Training grid plus the interleaved midpoint test grid.

    Training frames come from the full uniform grid (2*n_max/step + 1
    points); generalization is tested on the midpoints between adjacent
    grid speeds, which are synthesized separately and never appear in
    optimization.
    """
    if grid_step <= 0 or round(n_max / grid_step) * grid_step != n_max:
        raise ConfigError(f"grid step {grid_step} must divide n_max {n_max}")
    n_steps = int(round(n_max / grid_step))
    train = tuple(-n_max + k * grid_step for k in range(2 * n_steps + 1))
    half = grid_step / 2.0
    positives = tuple(half + k * grid_step for k in range(n_steps))
    test = tuple(sorted((-v for v in positives)) + list(positives))
    return SpeedSplit(train_speeds=train, test_speeds=test,
                      val_fraction=val_fraction)


def _run_frame(run: SignalRun) -> pd.DataFrame:
    frame = pd.DataFrame({
        "rpm": np.full(run.n_samples, int(round(run.rpm)), dtype=np.int64),
        "fault": run.fault.csv_name,
    })
    for name, channel in zip(CHANNEL_NAMES, run.channels):
        frame[name] = channel
    return frame


def write_csv(runs, path) -> int:
    """Write runs row-wise to ``path``; returns the number of data rows.

    The file is assembled under a temporary name and moved into place on
    success, so an interrupted write never leaves a partial file behind.
    """
    tmp_path = f"{os.fspath(path)}.partial"
    rows = 0
    try:
        with open(tmp_path, "w", newline="") as fh:
            fh.write(",".join(CSV_HEADER) + "\n")
            for run in runs:
                _run_frame(run).to_csv(fh, header=False, index=False,
                                       float_format=FLOAT_FORMAT,
                                       lineterminator="\n")
                rows += run.n_samples
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    return rows


@dataclass
class RunRecord:
    """One contiguous (rpm, fault) block read back from a dataset file."""

    channels: np.ndarray
    rpm: float
    fault: FaultClass

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]


def _find_bad_line(path) -> None:
    """Second-pass diagnostic scan; raises DataError at the first bad row."""
    with open(path) as fh:
        next(fh)
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(CSV_HEADER):
                raise DataError(f"{path}:{lineno}: expected {len(CSV_HEADER)} "
                                f"columns, got {len(parts)}")
            try:
                int(parts[0])
                for value in parts[2:]:
                    float(value)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: unparseable row ({exc})") from exc
    raise DataError(f"{path}: malformed data")


def read_csv(path) -> list[RunRecord]:
    """Read a dataset file, grouping rows into contiguous (rpm, fault) runs.

    Raises:
        DataError: missing file, schema mismatch, unparseable row (with
            line number), or an unknown fault name.
    """
    if not os.path.exists(path):
        raise DataError(f"dataset file not found: {path}")
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
    if tuple(header) != CSV_HEADER:
        raise DataError(f"{path}: schema mismatch: expected "
                        f"{','.join(CSV_HEADER)!r}, got {','.join(header)!r}")
    try:
        table = pd.read_csv(
            path,
            dtype={"rpm": np.int64, "fault": str,
                   **{name: np.float64 for name in CHANNEL_NAMES}},
            keep_default_na=False,
            engine="c",
        )
    except (ValueError, pd.errors.ParserError):
        _find_bad_line(path)

    unknown = set(table["fault"].unique()) - set(FAULT_NAMES)
    if unknown:
        raise DataError(f"{path}: unknown fault names {sorted(unknown)}")

    rpm = table["rpm"].to_numpy()
    fault_idx = table["fault"].map({name: i for i, name in enumerate(FAULT_NAMES)})
    fault_idx = fault_idx.to_numpy()
    signals = table[list(CHANNEL_NAMES)].to_numpy().T

    boundaries = np.flatnonzero((np.diff(rpm) != 0) | (np.diff(fault_idx) != 0)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(rpm)]])
    return [
        RunRecord(channels=signals[:, s:e], rpm=float(rpm[s]),
                  fault=FaultClass(int(fault_idx[s])))
        for s, e in zip(starts, ends)
    ]
