"""Numba-fused batch-norm kernels for the training hot path.

Each kernel makes exactly one pass over its row-major operands, which is
what the memory-bound normalization stages need on low-bandwidth hosts.
Reductions accumulate into a fixed number of row blocks in float64 and are
combined in block order, so results do not depend on thread scheduling.

The optional ``relu`` flag fuses the activation (and, in backward, its
mask) into the normalization pass; the standalone ReLU layer remains
available for unfused use.
"""

from __future__ import annotations

import numba
import numpy as np
from numba import njit, prange

# The workqueue layer parks its threads between calls, so it coexists with
# the BLAS pool on few-core hosts without spin-wait contention.
numba.config.THREADING_LAYER = "workqueue"

#: Fixed reduction block count; results are identical for any thread count.
N_BLOCKS = 16


def set_threads(n: int) -> None:
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


@njit(parallel=True, cache=True)
def colsum_blocks(x, nb):
    rows, cols = x.shape
    part = np.zeros((nb, cols), dtype=np.float64)
    step = (rows + nb - 1) // nb
    for b in prange(nb):
        lo = b * step
        hi = min(lo + step, rows)
        for r in range(lo, hi):
            for c in range(cols):
                part[b, c] += x[r, c]
    return part


@njit(parallel=True, cache=True)
def centered_sq_blocks(x, mean, nb):
    rows, cols = x.shape
    part = np.zeros((nb, cols), dtype=np.float64)
    step = (rows + nb - 1) // nb
    for b in prange(nb):
        lo = b * step
        hi = min(lo + step, rows)
        for r in range(lo, hi):
            for c in range(cols):
                d = x[r, c] - mean[c]
                part[b, c] += d * d
    return part


@njit(parallel=True, cache=True)
def bn_affine(x, mean, inv_std, gamma, beta, relu, out):
    """out = [relu](gamma * (x - mean) * inv_std + beta), one pass."""
    rows, cols = x.shape
    for r in prange(rows):
        for c in range(cols):
            v = gamma[c] * ((x[r, c] - mean[c]) * inv_std[c]) + beta[c]
            if relu and v < 0.0:
                v = 0.0
            out[r, c] = v


@njit(parallel=True, cache=True)
def bn_bwd_reduce(dout, x, mean, inv_std, out_fwd, relu, nb):
    """Blockwise (sum dy * xhat, sum dy); dy is relu-masked when fused."""
    rows, cols = x.shape
    pg = np.zeros((nb, cols), dtype=np.float64)
    pb = np.zeros((nb, cols), dtype=np.float64)
    step = (rows + nb - 1) // nb
    for b in prange(nb):
        lo = b * step
        hi = min(lo + step, rows)
        for r in range(lo, hi):
            for c in range(cols):
                g = dout[r, c]
                if relu and out_fwd[r, c] <= 0.0:
                    g = 0.0
                pg[b, c] += g * (x[r, c] - mean[c]) * inv_std[c]
                pb[b, c] += g
    return pg, pb


@njit(parallel=True, cache=True)
def bn_bwd_dx(dout, x, mean, inv_std, coef, mean_shift, hat_shift,
              out_fwd, relu, dx):
    """dx = coef * dy - mean_shift - xhat * hat_shift, one pass."""
    rows, cols = x.shape
    for r in prange(rows):
        for c in range(cols):
            g = dout[r, c]
            if relu and out_fwd[r, c] <= 0.0:
                g = 0.0
            xh = (x[r, c] - mean[c]) * inv_std[c]
            dx[r, c] = coef[c] * g - mean_shift[c] - xh * hat_shift[c]
