"""Low-level same-length 1-D cross-correlation on a rows layout.

Activations are stored channels-last as (rows, channels) with rows =
batch * time. Each kernel tap then becomes a plain row shift, so forward,
input gradient, and weight gradient are expressed as a handful of large
BLAS calls on contiguous views instead of an im2col gather, which is what
makes batch training and sub-millisecond single-frame inference feasible
on modest hardware.

Per-sample zero padding is emulated by one global zero-padded buffer; the
few output rows per sample whose window crosses a sample boundary are
recomputed (or corrected, for weight gradients) exactly afterwards.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.linalg import blas as _blas

from .parallel import blas_threads, run_rows

# Rows per GEMM chunk: large enough to amortize call overhead, small enough
# that the accumulator block stays cache-resident.
CHUNK_ROWS = 16384
# Row-block size for the batched weight-gradient reduction.
WGRAD_BLOCK = 1024
# Below this many rows a single windowed GEMM beats the chunked tap loop.
SMALL_ROWS = 4096


def _gemm_acc(a, b, c, beta):
    """c = a @ b + beta * c for C-contiguous 2-D arrays, without copies."""
    fn = _blas.sgemm if a.dtype == np.float32 else _blas.dgemm
    fn(1.0, b.T, a.T, beta=beta, c=c.T, overwrite_c=1)


def pad_rows(x_rows: np.ndarray, pad: int, out: np.ndarray | None = None):
    """Copy (rows, C) into a (rows + 2*pad, C) buffer with zero guard rows."""
    rows, channels = x_rows.shape
    if out is None:
        out = np.zeros((rows + 2 * pad, channels), dtype=x_rows.dtype)
    else:
        if pad:
            out[:pad] = 0.0
            out[pad + rows:] = 0.0
    interior = out[pad:pad + rows]
    run_rows(lambda s, e, _: np.copyto(interior[s:e], x_rows[s:e]), rows)
    return out


def _edge_positions(pad: int, frame_len: int) -> list[int]:
    return [t for t in range(frame_len)
            if t < pad or t >= frame_len - pad]


def _stacked_taps(taps) -> np.ndarray:
    """(k*C_in, C_out) weight matrix with rows in (tap, channel) order."""
    return np.concatenate(taps, axis=0)


def _edge_windows(xg, batch, frame_len, pad, k, edge_ts, dtype):
    """Zero-padded windows for the boundary output rows.

    Returns (batch, n_edge, k*C_in) with zeros where a window leaves the
    sample, plus the matching bleed windows the bulk GEMM actually used.
    """
    c_in = xg.shape[1]
    rows = batch * frame_len
    x3 = xg[pad:pad + rows].reshape(batch, frame_len, c_in)
    true = np.zeros((batch, len(edge_ts), k * c_in), dtype=dtype)
    bleed = np.empty_like(true)
    for i, t in enumerate(edge_ts):
        for j in range(k):
            s = t - pad + j
            col = slice(j * c_in, (j + 1) * c_in)
            bleed[:, i, col] = xg[t + j: t + j + rows: frame_len]
            if 0 <= s < frame_len:
                true[:, i, col] = x3[:, s, :]
    return true, bleed


def _fix_forward_edges(xg, taps, out, batch, frame_len):
    k = len(taps)
    pad = (k - 1) // 2
    edge_ts = _edge_positions(pad, frame_len)
    if not edge_ts:
        return
    true, _ = _edge_windows(xg, batch, frame_len, pad, k, edge_ts, out.dtype)
    w2d = _stacked_taps(taps)
    fixed = true.reshape(batch * len(edge_ts), -1) @ w2d
    out3 = out.reshape(batch, frame_len, -1)
    out3[:, edge_ts, :] = fixed.reshape(batch, len(edge_ts), -1)


def conv_rows_forward(xg, taps, out, batch, frame_len, chunk=CHUNK_ROWS):
    """out[r] = sum_j xg[r + j] @ taps[j], with per-sample zero padding.

    Args:
        xg: globally padded input rows ((batch*frame_len + 2*pad, C_in)).
        taps: list of k contiguous (C_in, C_out) weight slices.
        out: preallocated (batch*frame_len, C_out) output rows.
        batch, frame_len: logical row structure (rows = batch * frame_len).
    """
    k = len(taps)
    pad = (k - 1) // 2
    rows = batch * frame_len
    c_in = xg.shape[1]

    if rows <= SMALL_ROWS:
        # One windowed GEMM; the overlapping view is materialized once.
        view = as_strided(xg, shape=(rows, k * c_in),
                          strides=(xg.strides[0], xg.strides[1]))
        np.dot(np.ascontiguousarray(view), _stacked_taps(taps), out=out)
    else:
        def work(lo, hi, _slot):
            for start in range(lo, hi, chunk):
                end = min(start + chunk, hi)
                block = out[start:end]
                for j in range(k):
                    _gemm_acc(xg[start + j:end + j], taps[j], block,
                              beta=0.0 if j == 0 else 1.0)

        # Chunk outputs are disjoint, so row ranges parallelize safely.
        run_rows(work, rows)

    if pad:
        _fix_forward_edges(xg, taps, out, batch, frame_len)
    return out


def conv_rows_input_grad(doutg, taps, dx, batch, frame_len, chunk=CHUNK_ROWS):
    """Gradient w.r.t. the conv input rows.

    For same-length correlation with odd k this is again a same-length
    correlation of the (padded) upstream gradient with flipped,
    transposed taps, so the forward kernel is reused verbatim.

    Args:
        doutg: globally padded upstream gradient rows.
        taps: the k forward (C_in, C_out) weight slices.
        dx: preallocated (batch*frame_len, C_in) output.
    """
    k = len(taps)
    flipped = [np.ascontiguousarray(taps[k - 1 - j].T) for j in range(k)]
    return conv_rows_forward(doutg, flipped, dx, batch, frame_len, chunk)


def _wgrad_range(xg, dout, lo, hi, n_taps, c_in, c_out, block):
    grads = []
    span = hi - lo
    n_blocks = span // block
    for j in range(n_taps):
        shifted = xg[lo + j:hi + j]
        d_rows = dout[lo:hi]
        acc = np.zeros((c_in, c_out), dtype=np.float64)
        if n_blocks:
            main = np.matmul(
                shifted[:n_blocks * block].reshape(n_blocks, block, c_in)
                .transpose(0, 2, 1),
                d_rows[:n_blocks * block].reshape(n_blocks, block, c_out))
            acc += main.sum(axis=0, dtype=np.float64)
        if span % block:
            tail = shifted[n_blocks * block:]
            acc += tail.T.astype(np.float64) @ d_rows[n_blocks * block:].astype(np.float64)
        grads.append(acc)
    return grads


def conv_rows_weight_grad(xg, dout, batch, frame_len, n_taps,
                          block=WGRAD_BLOCK):
    """Per-tap weight gradients dW_j = sum_r window_j(r)^T dout[r].

    The bulk reduction runs over the globally padded rows; contributions
    from windows that crossed a sample boundary are then replaced by their
    zero-padded counterparts.

    Returns:
        list of k (C_in, C_out) arrays in the dtype of ``xg``.
    """
    pad = (n_taps - 1) // 2
    rows = batch * frame_len
    c_in = xg.shape[1]
    c_out = dout.shape[1]

    # The blocked matmuls here run fastest single-threaded inside the
    # row-range worker pool.
    with blas_threads(1):
        partials = run_rows(
            lambda lo, hi, _slot: _wgrad_range(xg, dout, lo, hi, n_taps,
                                               c_in, c_out, block),
            rows)
    grads = [sum(part[j] for part in partials) for j in range(n_taps)]

    if pad:
        edge_ts = _edge_positions(pad, frame_len)
        true, bleed = _edge_windows(xg, batch, frame_len, pad, n_taps,
                                    edge_ts, np.float64)
        dout_e = dout.reshape(batch, frame_len, c_out)[:, edge_ts, :]
        corr = np.einsum("bew,beo->wo", bleed - true,
                         dout_e.astype(np.float64))
        for j in range(n_taps):
            grads[j] -= corr[j * c_in:(j + 1) * c_in]
    return [g.astype(xg.dtype) for g in grads]
