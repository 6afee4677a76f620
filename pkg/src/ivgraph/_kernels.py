"""Hot numeric kernels with a JIT and a pure-numpy implementation.

The bootstrap engines spend nearly all their time forming per-replicate
cross-moment matrices W[idx]' W[idx]. The numba path fuses the row gather
with the accumulation so no resampled copy is materialised; the numpy
path gathers and calls BLAS. Set IVGRAPH_DISABLE_NUMBA=1 to force the
numpy path (it is also used automatically when numba is unavailable).

Both paths are deterministic run to run and thread-count independent
(each replicate writes only its own output slot). They agree to floating
point round-off, not bit for bit, because the summation orders differ.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["cross_moment_scan", "active_backend", "DISABLE_ENV"]

DISABLE_ENV = "IVGRAPH_DISABLE_NUMBA"

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


def numba_disabled() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip() not in ("", "0")


def active_backend() -> str:
    """Backend the next kernel call will use: 'numba' or 'numpy'."""
    return "numba" if HAVE_NUMBA and not numba_disabled() else "numpy"


def _scan_numpy(w: np.ndarray, idx: np.ndarray, out: np.ndarray) -> None:
    for m in range(idx.shape[0]):
        wm = w[idx[m]]
        out[m] = wm.T @ wm


if HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _scan_numba(w, idx, out):  # pragma: no cover - compiled
        n_rep, n = idx.shape
        q = w.shape[1]
        for m in prange(n_rep):
            acc = np.zeros((q, q))  # per-replicate accumulator stays in cache
            for i in range(n):
                r = idx[m, i]
                for a in range(q):
                    wa = w[r, a]
                    for b in range(a, q):
                        acc[a, b] += wa * w[r, b]
            for a in range(q):
                for b in range(a, q):
                    out[m, a, b] = acc[a, b]
                    out[m, b, a] = acc[a, b]


def cross_moment_scan(w: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Per-replicate cross moments of resampled rows.

    Parameters
    ----------
    w : (n, q) float matrix of stacked columns.
    idx : (M, n) integer matrix; row m holds the resample indices of
        replicate m.

    Returns
    -------
    (M, q, q) array with entry [m] = w[idx[m]].T @ w[idx[m]].
    """
    w = np.ascontiguousarray(w, dtype=np.float64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if idx.ndim != 2:
        raise ValueError(f"index matrix must be 2-d, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= w.shape[0]):
        raise ValueError("resample indices out of range")
    out = np.zeros((idx.shape[0], w.shape[1], w.shape[1]), dtype=np.float64)
    if active_backend() == "numba":
        _scan_numba(w, idx, out)
    else:
        _scan_numpy(w, idx, out)
    return out
