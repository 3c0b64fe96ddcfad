"""Binary model checkpoints.

Layout (little-endian): magic, version, architecture header, dropout rate,
FP32 parameter blobs in fixed order (conv1.w, conv1.b, bn1.gamma, bn1.beta,
bn1.running_mean, bn1.running_var, conv2 likewise, fc.w, fc.b), then the
training-set channel statistics so inference needs no dataset access.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import DataError
from ..framing import ChannelStats
from .model import FaultCNN1D

MAGIC = b"FLTCNN1D"
VERSION = 1
_HEADER = struct.Struct("<8sI6If")


def save_checkpoint(model: FaultCNN1D, path) -> None:
    """Write the model (and its channel stats, if set) to ``path``."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(
            MAGIC, VERSION,
            model.in_channels,
            model.conv1.out_channels, model.conv1.kernel_size,
            model.conv2.out_channels, model.conv2.kernel_size,
            model.n_classes,
            float(model.dropout.p),
        ))
        for array in model.state_arrays().values():
            fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())
        if model.stats is None:
            fh.write(struct.pack("<I", 0))
        else:
            fh.write(struct.pack("<I", model.stats.n_channels))
            fh.write(model.stats.mean.astype("<f8").tobytes())
            fh.write(model.stats.std.astype("<f8").tobytes())


def _read_exact(fh, n, path):
    data = fh.read(n)
    if len(data) != n:
        raise DataError(f"{path}: truncated checkpoint")
    return data


def load_checkpoint(path) -> FaultCNN1D:
    """Reconstruct a model from ``path``; round-trips bit-exactly for FP32."""
    with open(path, "rb") as fh:
        header = _read_exact(fh, _HEADER.size, path)
        magic, version, c_in, c1, k1, c2, k2, n_cls, p_drop = _HEADER.unpack(header)
        if magic != MAGIC:
            raise DataError(f"{path}: not a checkpoint (bad magic {magic!r})")
        if version != VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        model = FaultCNN1D(
            seed=0, dtype=np.float32, in_channels=c_in,
            conv1_channels=c1, conv1_kernel=k1,
            conv2_channels=c2, conv2_kernel=k2,
            n_classes=n_cls, p_drop=p_drop,
        )
        for name, array in model.state_arrays().items():
            blob = _read_exact(fh, 4 * array.size, path)
            array[...] = np.frombuffer(blob, dtype="<f4").reshape(array.shape)
        # Stored running stats are authoritative; mark both BN layers live.
        model.bn1.batches_tracked = 1
        model.bn2.batches_tracked = 1
        (n_stat,) = struct.unpack("<I", _read_exact(fh, 4, path))
        if n_stat:
            mean = np.frombuffer(_read_exact(fh, 8 * n_stat, path), dtype="<f8")
            std = np.frombuffer(_read_exact(fh, 8 * n_stat, path), dtype="<f8")
            model.stats = ChannelStats(mean=mean.copy(), std=std.copy())
    return model
