"""Row-range worker pool for the training hot path.

NumPy ufuncs and BLAS calls release the GIL on large arrays, so splitting
row ranges across a small thread pool scales the memory-bound stages on
multi-core hosts. Splits are a pure function of (n_rows, worker count,
alignment), and per-range partial results are combined in range order, so
results are deterministic for a fixed worker setting.
"""

from __future__ import annotations

import contextlib
import os
from concurrent.futures import ThreadPoolExecutor

_MIN_ROWS_PER_WORKER = 16384

_pool: ThreadPoolExecutor | None = None
_n_workers = max(1, min(2, os.cpu_count() or 1))
_blas_controllers = None


def _blas_libs():
    global _blas_controllers
    if _blas_controllers is None:
        import threadpoolctl

        ctl = threadpoolctl.ThreadpoolController()
        _blas_controllers = [c for c in ctl.lib_controllers
                             if c.internal_api in ("openblas", "mkl", "blis")]
    return _blas_controllers


@contextlib.contextmanager
def blas_threads(n: int):
    """Temporarily pin BLAS library threads (direct lib calls, ~1 us)."""
    libs = _blas_libs()
    previous = [lib.num_threads for lib in libs]
    for lib in libs:
        lib.set_num_threads(int(n))
    try:
        yield
    finally:
        for lib, prev in zip(libs, previous):
            lib.set_num_threads(prev)


def set_blas_threads(n: int) -> None:
    for lib in _blas_libs():
        lib.set_num_threads(int(n))


def set_workers(n: int) -> None:
    """Set the worker count for subsequent row-parallel calls."""
    global _pool, _n_workers
    n = max(1, int(n))
    if n != _n_workers and _pool is not None:
        _pool.shutdown(wait=True)
        _pool = None
    _n_workers = n


def configure_compute(workers: int | None = None) -> None:
    """Pin the process-wide compute setup for heavy numeric phases.

    BLAS libraries are held at one thread (their spin-waiting workers
    would fight the row-range pool and the numba kernels on few-core
    hosts); parallelism comes from ``workers`` row ranges instead.
    """
    from . import fused

    if workers is not None:
        set_workers(workers)
        fused.set_threads(workers)
    else:
        fused.set_threads(_n_workers)
    set_blas_threads(1)


def get_workers() -> int:
    return _n_workers


def _ensure_pool() -> ThreadPoolExecutor:
    global _pool
    if _pool is None:
        _pool = ThreadPoolExecutor(max_workers=_n_workers,
                                   thread_name_prefix="faultlab-rows")
    return _pool


def row_ranges(n_rows: int, align: int = 1) -> list[tuple[int, int]]:
    """Contiguous [start, stop) ranges covering n_rows, aligned to ``align``."""
    workers = _n_workers
    if workers == 1 or n_rows < workers * _MIN_ROWS_PER_WORKER:
        return [(0, n_rows)]
    base = n_rows // workers
    base -= base % align
    if base == 0:
        return [(0, n_rows)]
    bounds = [w * base for w in range(workers)] + [n_rows]
    return [(bounds[w], bounds[w + 1]) for w in range(workers)]


def run_rows(fn, n_rows: int, align: int = 1) -> list:
    """Run fn(start, stop, slot) over aligned row ranges, maybe in parallel.

    Returns the per-range results in range order.
    """
    ranges = row_ranges(n_rows, align)
    if len(ranges) == 1:
        start, stop = ranges[0]
        return [fn(start, stop, 0)]
    pool = _ensure_pool()
    futures = [pool.submit(fn, start, stop, slot)
               for slot, (start, stop) in enumerate(ranges)]
    return [f.result() for f in futures]
