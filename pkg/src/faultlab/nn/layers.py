"""The six layer kernels of the fault classifier, with analytic backward passes.

All convolutional-stage layers consume and produce the rows layout
(batch * frame_len, channels); see :mod:`faultlab.nn.rowconv`. Pooled-stage
layers work on (batch, channels). Weights initialize from U(-1/sqrt(fan_in),
+1/sqrt(fan_in)) with zero biases, gamma = 1, beta = 0.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import NumericalError
from . import fused
from .parallel import run_rows
from .rowconv import (
    conv_rows_forward,
    conv_rows_input_grad,
    conv_rows_weight_grad,
    pad_rows,
)

_DEBUG_CHECKS = False

# Inputs below this many rows take plain numpy paths; the numba kernels pay
# off only on large batches. Tests lower this to force the fused paths.
FUSED_MIN_ROWS = 16384


def set_debug_checks(enabled: bool) -> None:
    """Toggle per-op finiteness verification (slow; meant for tests)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def set_fused_min_rows(n: int) -> None:
    global FUSED_MIN_ROWS
    FUSED_MIN_ROWS = int(n)


def _check_finite(name: str, array: np.ndarray) -> None:
    if _DEBUG_CHECKS and not np.all(np.isfinite(array)):
        raise NumericalError(f"non-finite values in {name}")


class _Workspace:
    """Per-layer reusable buffers keyed by (tag, shape).

    ``zero`` applies only on allocation; callers that need guard regions
    cleared on reuse reset them explicitly.
    """

    def __init__(self):
        self._store = {}

    def get(self, tag, shape, dtype, zero=False):
        key = (tag, shape, np.dtype(dtype).str)
        buf = self._store.get(key)
        if buf is None:
            buf = np.zeros(shape, dtype=dtype) if zero else np.empty(shape, dtype=dtype)
            self._store[key] = buf
        return buf


class Conv1d:
    """Same-length 1-D cross-correlation (no kernel flip), odd kernel only."""

    def __init__(self, in_channels, out_channels, kernel_size, rng, dtype=np.float32):
        if kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd for same-length output")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.pad = (kernel_size - 1) // 2
        bound = 1.0 / math.sqrt(in_channels * kernel_size)
        self.weight = rng.uniform(
            -bound, bound, (in_channels, out_channels, kernel_size)).astype(dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.grads = {}
        self._ws = _Workspace()
        self._cache = None

    def _taps(self):
        return [np.ascontiguousarray(self.weight[:, :, j])
                for j in range(self.kernel_size)]

    def input_interior(self, batch, frame_len, dtype=np.float32):
        """Writable view of the padded input buffer; fill it and call
        forward(None, ..., prefilled=True) to skip the input copy."""
        rows = batch * frame_len
        xg = self._ws.get("xg", (rows + 2 * self.pad, self.in_channels),
                          dtype, zero=self.pad > 0)
        return xg[self.pad:self.pad + rows]

    def grad_interior(self, batch, frame_len, dtype=np.float32):
        """Writable view of the padded upstream-gradient buffer for
        backward(None, ..., prefilled=True)."""
        rows = batch * frame_len
        doutg = self._ws.get("doutg", (rows + 2 * self.pad, self.out_channels),
                             dtype, zero=self.pad > 0)
        return doutg[self.pad:self.pad + rows]

    def forward(self, x_rows, batch, frame_len, prefilled=False):
        rows = batch * frame_len
        if prefilled:
            xg = self._ws.get("xg", (rows + 2 * self.pad, self.in_channels),
                              self.weight.dtype)
        else:
            if x_rows.shape != (rows, self.in_channels):
                raise ValueError(
                    f"conv input shape {x_rows.shape} != ({rows}, {self.in_channels})")
            xg = self._ws.get("xg", (rows + 2 * self.pad, self.in_channels),
                              x_rows.dtype, zero=self.pad > 0)
            pad_rows(x_rows, self.pad, out=xg)
        out = self._ws.get("out", (rows, self.out_channels), xg.dtype)
        conv_rows_forward(xg, self._taps(), out, batch, frame_len)
        bias = self.bias
        run_rows(lambda s, e, _: out[s:e].__iadd__(bias), rows)
        self._cache = (xg, batch, frame_len)
        _check_finite("conv1d output", out)
        return out

    def backward(self, dout, need_input_grad=True, prefilled=False):
        xg, batch, frame_len = self._cache
        rows = batch * frame_len
        doutg = None
        if prefilled:
            doutg = self._ws.get("doutg", (rows + 2 * self.pad, self.out_channels),
                                 xg.dtype)
            dout = doutg[self.pad:self.pad + rows]
        dw_taps = conv_rows_weight_grad(xg, dout, batch, frame_len,
                                        self.kernel_size)
        dweight = np.stack(dw_taps, axis=2)
        db_parts = run_rows(lambda s, e, _: dout[s:e].sum(axis=0), rows)
        self.grads = {"w": dweight, "b": sum(db_parts)}
        if not need_input_grad:
            return None
        if doutg is None:
            doutg = self._ws.get("doutg", (rows + 2 * self.pad, self.out_channels),
                                 dout.dtype, zero=self.pad > 0)
            pad_rows(dout, self.pad, out=doutg)
        dx = self._ws.get("dx", (rows, self.in_channels), dout.dtype)
        conv_rows_input_grad(doutg, self._taps(), dx, batch, frame_len)
        _check_finite("conv1d input grad", dx)
        return dx


class BatchNorm1d:
    """Per-channel batch normalization pooled over batch and time rows.

    ``fuse_relu=True`` folds the following activation (and, in backward,
    its mask) into the normalization kernels; the caller then omits the
    separate ReLU layer.
    """

    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=np.float32):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.batches_tracked = 0
        self.grads = {}
        self._ws = _Workspace()
        self._cache = None

    def forward(self, x_rows, train, fuse_relu=False, out=None):
        dtype = x_rows.dtype
        rows = x_rows.shape[0]
        big = rows >= FUSED_MIN_ROWS
        if out is None:
            out = self._ws.get("out", x_rows.shape, dtype)
        if train:
            if big:
                mean64 = fused.colsum_blocks(x_rows, fused.N_BLOCKS).sum(axis=0) / rows
                mean = mean64.astype(dtype)
                var64 = fused.centered_sq_blocks(
                    x_rows, mean, fused.N_BLOCKS).sum(axis=0) / rows
            else:
                mean64 = x_rows.sum(axis=0, dtype=np.float64) / rows
                mean = mean64.astype(dtype)
                centered = x_rows - mean
                var64 = np.einsum("rc,rc->c", centered, centered,
                                  dtype=np.float64) / rows
            inv_std = (1.0 / np.sqrt(var64 + self.eps)).astype(dtype)
            if big:
                fused.bn_affine(x_rows, mean, inv_std, self.gamma, self.beta,
                                fuse_relu, out)
            else:
                np.multiply((x_rows - mean) * inv_std, self.gamma, out=out)
                out += self.beta
                if fuse_relu:
                    np.maximum(out, 0.0, out=out)
            m = self.momentum
            self.running_mean = ((1.0 - m) * self.running_mean + m * mean64).astype(dtype)
            self.running_var = ((1.0 - m) * self.running_var + m * var64).astype(dtype)
            self.batches_tracked += 1
            self._cache = ("train", x_rows, mean, inv_std, rows, fuse_relu, out)
        else:
            if self.batches_tracked == 0:
                raise NumericalError(
                    "batchnorm eval requested before any running-stat update")
            mean = self.running_mean.astype(dtype)
            inv_std = (1.0 / np.sqrt(
                self.running_var.astype(np.float64) + self.eps)).astype(dtype)
            if big:
                fused.bn_affine(x_rows, mean, inv_std, self.gamma, self.beta,
                                fuse_relu, out)
            else:
                np.multiply((x_rows - mean) * inv_std, self.gamma, out=out)
                out += self.beta
                if fuse_relu:
                    np.maximum(out, 0.0, out=out)
            self._cache = ("eval", (self.gamma * inv_std).astype(dtype),
                           fuse_relu, out)
        _check_finite("batchnorm output", out)
        return out

    def backward(self, dout, out=None):
        if self._cache[0] == "eval":
            _, scale, fuse_relu, fwd_out = self._cache
            dx = dout * scale
            if fuse_relu:
                dx *= fwd_out > 0
            return dx
        _, x_rows, mean, inv_std, rows, fuse_relu, fwd_out = self._cache
        dtype = dout.dtype
        if rows >= FUSED_MIN_ROWS:
            pg, pb = fused.bn_bwd_reduce(dout, x_rows, mean, inv_std, fwd_out,
                                         fuse_relu, fused.N_BLOCKS)
            dgamma = pg.sum(axis=0)
            dbeta = pb.sum(axis=0)
            coef = (self.gamma * inv_std).astype(dtype)
            mean_shift = (coef * dbeta / rows).astype(dtype)
            hat_shift = (coef * dgamma / rows).astype(dtype)
            self.grads = {"gamma": dgamma.astype(dtype), "beta": dbeta.astype(dtype)}
            dx = out if out is not None else self._ws.get("dx", dout.shape, dtype)
            fused.bn_bwd_dx(dout, x_rows, mean, inv_std, coef, mean_shift,
                            hat_shift, fwd_out, fuse_relu, dx)
            return dx
        g = dout * (fwd_out > 0) if fuse_relu else dout
        xhat = (x_rows - mean) * inv_std
        dgamma = np.einsum("rc,rc->c", g, xhat, dtype=np.float64)
        dbeta = g.sum(axis=0, dtype=np.float64)
        self.grads = {"gamma": dgamma.astype(dtype), "beta": dbeta.astype(dtype)}
        coef = (self.gamma * inv_std).astype(dtype)
        dx = (coef * g
              - (coef * dbeta / rows).astype(dtype)
              - xhat * (coef * dgamma / rows).astype(dtype))
        if out is not None:
            out[...] = dx
            return out
        return dx


class ReLU:
    """max(0, x); the subgradient at exactly zero is zero."""

    def __init__(self):
        self._out = None
        self._ws = _Workspace()

    def forward(self, x, inplace=False):
        out = x if inplace else self._ws.get("out", x.shape, x.dtype)
        run_rows(lambda s, e, _: np.maximum(x[s:e], 0.0, out=out[s:e]),
                 x.shape[0])
        self._out = out
        return out

    def backward(self, dout):
        mask = self._ws.get("mask", self._out.shape, bool)
        dx = self._ws.get("dx", dout.shape, dout.dtype)
        out = self._out

        def work(s, e, _):
            np.greater(out[s:e], 0.0, out=mask[s:e])
            np.multiply(dout[s:e], mask[s:e], out=dx[s:e])

        run_rows(work, dout.shape[0])
        return dx


class GlobalAvgPool:
    """Mean over the time axis: rows (batch*frame_len, C) -> (batch, C)."""

    def __init__(self):
        self._shape = None
        self._ws = _Workspace()

    def forward(self, x_rows, batch, frame_len):
        channels = x_rows.shape[1]
        self._shape = (batch, frame_len, channels)
        x3 = x_rows.reshape(self._shape)
        out = np.empty((batch, channels), dtype=x_rows.dtype)
        run_rows(
            lambda s, e, _: np.mean(x3[s // frame_len:e // frame_len],
                                    axis=1, out=out[s // frame_len:e // frame_len]),
            batch * frame_len, align=frame_len)
        return out

    def backward(self, dz):
        batch, frame_len, channels = self._shape
        dx = self._ws.get("dx", (batch * frame_len, channels), dz.dtype)
        dx3 = dx.reshape(self._shape)
        scaled = dz / frame_len

        def work(s, e, _):
            lo, hi = s // frame_len, e // frame_len
            dx3[lo:hi] = scaled[lo:hi, None, :]

        run_rows(work, batch * frame_len, align=frame_len)
        return dx


class Dropout:
    """Inverted dropout: kept units scale by 1/(1-p); eval is the identity."""

    def __init__(self, p, rng):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout p must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng
        self.mask_override = None
        self._mask = None

    def forward(self, x, train):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        if self.mask_override is not None:
            keep = self.mask_override
        else:
            keep = self.rng.random(x.shape) >= self.p
        self._mask = keep.astype(x.dtype) / (1.0 - self.p)
        return x * self._mask

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask


class Linear:
    """Affine map on pooled features: (batch, C_in) -> (batch, C_out)."""

    def __init__(self, in_features, out_features, rng, dtype=np.float32):
        bound = 1.0 / math.sqrt(in_features)
        self.weight = rng.uniform(
            -bound, bound, (in_features, out_features)).astype(dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self.grads = {}
        self._x = None

    def forward(self, x):
        if x.shape[-1] != self.weight.shape[0]:
            raise ValueError(
                f"linear input width {x.shape[-1]} != {self.weight.shape[0]}")
        self._x = x
        return x @ self.weight + self.bias

    def backward(self, dout):
        self.grads = {"w": self._x.T @ dout, "b": dout.sum(axis=0)}
        return dout @ self.weight.T


def softmax(logits, axis=-1):
    """Numerically stabilized softmax along ``axis``."""
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=axis, keepdims=True)
