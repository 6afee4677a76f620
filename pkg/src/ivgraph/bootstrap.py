"""Deterministic nonparametric bootstrap for IV reliability scoring.

Replicate m draws its row indices from a generator keyed by
(seed, replicate_index), so every replicate is a pure function of those
two integers and results never depend on execution order or thread
count. Aggregation always runs in replicate-index order, which makes
reports bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._kernels import cross_moment_scan
from .errors import TooManyFailures
from .iv import WEAK_TOL, iv_estimate
from .regress import Dataset

__all__ = ["ReliabilityReport", "bootstrap_indices", "index_matrix", "resample", "reliability"]

FAILURE_CEILING = 0.1


@dataclass(frozen=True)
class ReliabilityReport:
    """Bootstrap variance, bias, and the combined reliability score.

    beta_iv, beta_iv_repaired : full-sample estimates with the original
        and the repaired instruments.
    variance : per-coefficient bootstrap variance of the original-z
        estimator.
    bias : per-coefficient mean over replicates of (beta_repaired - beta).
    bias_se : bootstrap standard error of the bias, the standard
        deviation of the per-replicate differences.
    mse_like : variance + bias**2, entrywise.
    failed_replicates : resamples dropped for a degenerate first stage.
    """

    beta_iv: np.ndarray
    beta_iv_repaired: np.ndarray
    variance: np.ndarray
    bias: np.ndarray
    bias_se: np.ndarray
    mse_like: np.ndarray
    replicates: int
    seed: int
    failed_replicates: int


def bootstrap_indices(n: int, seed: int, replicate_index: int) -> np.ndarray:
    """Row indices for one replicate: n i.i.d. uniform draws with replacement.

    A pure function of (seed, replicate_index); the same pair always
    yields the same index vector, independent of any other replicate.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if seed < 0 or replicate_index < 0:
        raise ValueError("seed and replicate_index must be non-negative")
    rng = np.random.default_rng([seed, replicate_index])
    return rng.integers(0, n, size=n)


def index_matrix(n: int, replicates: int, seed: int) -> np.ndarray:
    """Stacked index vectors for replicates 0..replicates-1."""
    out = np.empty((replicates, n), dtype=np.int64)
    for m in range(replicates):
        out[m] = bootstrap_indices(n, seed, m)
    return out


def resample(
    data: Dataset,
    extra_columns: list[np.ndarray] | None,
    seed: int,
    replicate_index: int,
) -> tuple[Dataset, list[np.ndarray]]:
    """Row-resampled copies of the dataset and any aligned extra matrices.

    The identical index vector is applied to everything, keeping rows
    matched across the dataset and the extras. The copy loses the
    centered flag: a resample of centered data has nonzero means.
    """
    extras = [] if extra_columns is None else [np.asarray(c) for c in extra_columns]
    for c in extras:
        if c.shape[0] != data.n:
            raise ValueError(f"extra column block has {c.shape[0]} rows, dataset has {data.n}")
    idx = bootstrap_indices(data.n, seed, replicate_index)
    resampled = replace(data, values=data.values[idx], centered=False)
    return resampled, [c[idx] for c in extras]


def _moment_beta(s_zx, s_zy, s_zz, p_x: int):
    if s_zx.shape[0] == p_x:
        return np.linalg.solve(s_zx, s_zy)
    proj = np.linalg.solve(s_zz, np.hstack([s_zx, s_zy]))
    return np.linalg.solve(s_zx.T @ proj[:, :p_x], s_zx.T @ proj[:, p_x:])


def reliability(
    data: Dataset,
    z,
    z_repaired,
    replicates: int = 1000,
    seed: int = 0,
    weak_tol: float = WEAK_TOL,
) -> ReliabilityReport:
    """Bootstrap both IV estimators and score the original instruments.

    Every replicate resamples the rows of (z, z_repaired, x, y) jointly
    and recomputes both estimators; the repaired instruments are treated
    as data, fixed once on the full sample. The bias of the original-z
    estimator is the mean replicate difference, and the reliability score
    adds its square to the bootstrap variance. Replicates whose first
    stage is rank deficient (either instrument set) are dropped and
    counted; more than 10% of them invalidates the report.

    Raises
    ------
    TooManyFailures
        When dropped replicates exceed the 10% ceiling.
    """
    if replicates < 2:
        raise ValueError(f"need at least 2 replicates, got {replicates}")
    beta_full = iv_estimate(data, z, weak_tol=weak_tol).beta
    beta_full_rep = iv_estimate(data, z_repaired, weak_tol=weak_tol).beta

    x = data.block_values(data.role_block("x"))
    y = data.block_values(data.role_block("y"))
    z = np.asarray(z, dtype=np.float64)
    z = z[:, None] if z.ndim == 1 else z
    zr = np.asarray(z_repaired, dtype=np.float64)
    zr = zr[:, None] if zr.ndim == 1 else zr
    n, p_x = x.shape
    k, kr = z.shape[1], zr.shape[1]

    idx = index_matrix(n, replicates, seed)
    scans = cross_moment_scan(np.hstack([z, zr, x, y]), idx)
    sl_z = slice(0, k)
    sl_r = slice(k, k + kr)
    sl_x = slice(k + kr, k + kr + p_x)
    sl_y = slice(k + kr + p_x, k + kr + p_x + y.shape[1])

    betas = np.empty((replicates, p_x, y.shape[1]))
    betas_rep = np.empty_like(betas)
    kept = 0
    failed = 0
    for m in range(replicates):
        s = scans[m]
        s_zx = s[sl_z, sl_x]
        s_rx = s[sl_r, sl_x]
        weak = min(
            np.linalg.svd(s_zx, compute_uv=False)[-1],
            np.linalg.svd(s_rx, compute_uv=False)[-1],
        ) / n
        if weak < weak_tol:
            failed += 1
            continue
        try:
            betas[kept] = _moment_beta(s_zx, s[sl_z, sl_y], s[sl_z, sl_z], p_x)
            betas_rep[kept] = _moment_beta(s_rx, s[sl_r, sl_y], s[sl_r, sl_r], p_x)
        except np.linalg.LinAlgError:
            failed += 1
            continue
        kept += 1

    if failed > FAILURE_CEILING * replicates or kept < 2:
        raise TooManyFailures(failed, replicates)

    diffs = betas_rep[:kept] - betas[:kept]
    variance = betas[:kept].var(axis=0, ddof=1)
    bias = diffs.mean(axis=0)
    bias_se = diffs.std(axis=0, ddof=1)
    return ReliabilityReport(
        beta_iv=beta_full,
        beta_iv_repaired=beta_full_rep,
        variance=variance,
        bias=bias,
        bias_se=bias_se,
        mse_like=variance + bias**2,
        replicates=replicates,
        seed=seed,
        failed_replicates=failed,
    )
