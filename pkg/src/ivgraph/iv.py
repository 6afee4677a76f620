"""Instrument validity testing, construction, repair, and IV/2SLS estimation.

The validity criterion throughout is the sample orthogonality of an
instrument column to the residuals of y regressed on x. Instruments can
be tested against it (`validity_test`), built to satisfy it exactly
(`construct_instruments`), or minimally repaired onto it (`nearest_valid`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import cross_moment_scan
from .errors import (
    InsufficientCount,
    NoValidSpace,
    TooManyFailures,
    Underidentified,
    WeakInstrument,
)
from .regress import RANK_TOL, Dataset, ols

__all__ = [
    "InstrumentSet",
    "IvEstimate",
    "ValidityVerdict",
    "iv_estimate",
    "validity_test",
    "construct_instruments",
    "nearest_valid",
    "causal_effect",
]

WEAK_TOL = 1e-8


@dataclass(frozen=True)
class InstrumentSet:
    """Instruments built from the candidate columns (w, eta_x).

    instruments : (n, k), each column unit norm, mutually orthogonal.
    weights : (p_w + p_x, k) combination weights; instruments equal the
        candidate matrix times these weights.
    relevance : per column, the Euclidean norm of x' z_k.
    validity_gap : max over columns of |z_k' e_{y|x}| / n.
    """

    instruments: np.ndarray
    weights: np.ndarray
    relevance: np.ndarray
    validity_gap: float


@dataclass(frozen=True)
class IvEstimate:
    """Causal-effect estimate of y on x through instruments.

    beta : (p_x, p_y) coefficient matrix.
    method : 'just-identified' or 'two-stage', whichever path ran.
    first_stage_rank : effective rank of the z'x cross moment.
    """

    beta: np.ndarray
    method: str
    first_stage_rank: int


@dataclass(frozen=True)
class ValidityVerdict:
    """Bootstrap-studentized orthogonality test, one row per instrument column.

    statistic : (k, p_y) cross moments z_k' e_{y|x} / n.
    standard_error : matching nonparametric bootstrap standard errors.
    p_value : two-sided normal-approximation p-values.
    decision : 'invalid' if any p-value falls below alpha, else 'valid'.
    """

    statistic: np.ndarray
    standard_error: np.ndarray
    p_value: np.ndarray
    decision: str
    alpha: float
    replicates: int
    seed: int
    failed_replicates: int


def _instrument_matrix(data: Dataset, instruments) -> np.ndarray:
    z = np.asarray(instruments, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    if z.ndim != 2 or z.shape[0] != data.n:
        raise ValueError(f"instrument matrix must have shape ({data.n}, k), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("instrument matrix contains non-finite values")
    return z


def _treatment_outcome(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if not data.centered:
        raise ValueError("data must be centered before estimation")
    return data.block_values(data.role_block("x")), data.block_values(data.role_block("y"))


def _first_stage(s_zx: np.ndarray, n: int, weak_tol: float) -> int:
    svals = np.linalg.svd(s_zx, compute_uv=False)
    smallest = float(svals[-1]) / n
    if smallest < weak_tol:
        rank = int(np.sum(svals / n >= weak_tol))
        raise WeakInstrument(rank, weak_tol, smallest)
    return int(np.sum(svals > RANK_TOL * svals[0]))


def iv_estimate(
    data: Dataset,
    instruments,
    weak_tol: float = WEAK_TOL,
    method: str = "auto",
) -> IvEstimate:
    """IV/2SLS estimate of the effect of the x block on the y block.

    With k = p_x instrument columns the just-identified form
    (z'x)^-1 z'y is used; with k > p_x the two-stage form
    (x'z (z'z)^-1 z'x)^-1 x'z (z'z)^-1 z'y. Both agree when both apply.

    Raises
    ------
    Underidentified
        When there are fewer instrument columns than treatment columns.
    WeakInstrument
        When the smallest singular value of z'x / n is below weak_tol.
    """
    x, y = _treatment_outcome(data)
    z = _instrument_matrix(data, instruments)
    n, p_x = x.shape
    k = z.shape[1]
    if k < p_x:
        raise Underidentified(k, p_x)
    if method not in ("auto", "just-identified", "two-stage"):
        raise ValueError(f"unknown method {method!r}")
    if method == "just-identified" and k != p_x:
        raise ValueError("just-identified form requires as many instruments as treatments")

    s_zx = z.T @ x
    rank = _first_stage(s_zx, n, weak_tol)
    if method == "auto":
        method = "just-identified" if k == p_x else "two-stage"

    if method == "just-identified":
        beta = np.linalg.solve(s_zx, z.T @ y)
    else:
        proj = np.linalg.solve(z.T @ z, np.hstack([s_zx, z.T @ y]))
        beta = np.linalg.solve(s_zx.T @ proj[:, :p_x], s_zx.T @ proj[:, p_x:])
    return IvEstimate(beta=beta, method=method, first_stage_rank=rank)


def _two_sided_p(statistic: np.ndarray, se: np.ndarray) -> np.ndarray:
    p = np.empty_like(statistic)
    flat_s = statistic.reshape(-1)
    flat_se = se.reshape(-1)
    flat_p = p.reshape(-1)
    for i in range(flat_s.size):
        if flat_se[i] > 0.0:
            flat_p[i] = math.erfc(abs(flat_s[i]) / (flat_se[i] * math.sqrt(2.0)))
        else:
            flat_p[i] = 1.0 if flat_s[i] == 0.0 else 0.0
    return p


def validity_test(
    data: Dataset,
    instruments,
    alpha: float = 0.05,
    replicates: int = 1000,
    seed: int = 0,
) -> ValidityVerdict:
    """Test each instrument column for orthogonality to e_{y|x}.

    The statistic z_k' e_{y|x} / n is studentized by its nonparametric
    bootstrap standard error: rows of (z, x, y) are resampled jointly and
    the y-on-x regression is refit on every replicate, so the uncertainty
    of the residuals is part of the standard error. p-values use the
    two-sided normal approximation. Deterministic given the seed; the
    studentized statistic, hence the decision, is invariant to positive
    rescaling of instrument columns.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if replicates < 100:
        raise ValueError(f"need at least 100 bootstrap replicates, got {replicates}")
    x, y = _treatment_outcome(data)
    z = _instrument_matrix(data, instruments)
    n, p_x = x.shape
    k = z.shape[1]

    fit = ols(data, [data.role_block("x")], [data.role_block("y")])
    statistic = z.T @ fit.residuals / n

    from .bootstrap import index_matrix  # deferred: bootstrap imports this module

    idx = index_matrix(n, replicates, seed)
    scans = cross_moment_scan(np.hstack([z, x, y]), idx)
    sl_z = slice(0, k)
    sl_x = slice(k, k + p_x)
    sl_y = slice(k + p_x, k + p_x + y.shape[1])

    draws = np.empty((replicates, k, y.shape[1]))
    failed = 0
    kept = 0
    for m in range(replicates):
        s = scans[m]
        s_xx = s[sl_x, sl_x]
        svals = np.linalg.svd(s_xx, compute_uv=False)
        if svals[-1] <= 1e-12 * max(svals[0], 1.0):
            failed += 1
            continue
        beta_m = np.linalg.solve(s_xx, s[sl_x, sl_y])
        draws[kept] = (s[sl_z, sl_y] - s[sl_z, sl_x] @ beta_m) / n
        kept += 1
    if failed > 0.1 * replicates or kept < 2:
        raise TooManyFailures(failed, replicates)

    se = draws[:kept].std(axis=0, ddof=1)
    p_value = _two_sided_p(statistic, se)
    decision = "invalid" if np.any(p_value < alpha) else "valid"
    return ValidityVerdict(
        statistic=statistic,
        standard_error=se,
        p_value=p_value,
        decision=decision,
        alpha=alpha,
        replicates=replicates,
        seed=seed,
        failed_replicates=failed,
    )


def construct_instruments(data: Dataset, count: int, rank_tol: float = RANK_TOL) -> InstrumentSet:
    """Build `count` unit-norm instruments exactly orthogonal to e_{y|x}.

    Candidates are the w block and eta_x, the residuals of x regressed
    on w; any combination of them inherits a causal effect on x. The
    orthogonality constraints G = (w, eta_x)' e_{y|x} cut out a feasible
    subspace (the null space of G'), inside which instruments are chosen
    to maximise first-stage strength: successive combinations, orthonormal
    in data space, with the largest Euclidean norm of x' z, found by
    singular value analysis of the candidate-to-x cross moments restricted
    to the feasible subspace. Columns come out ordered by descending
    relevance.

    Raises
    ------
    NoValidSpace
        When the constraints leave no feasible direction.
    InsufficientCount
        When the feasible subspace has dimension below `count`.
    """
    if count < 1:
        raise ValueError(f"need count >= 1, got {count}")
    x, y = _treatment_outcome(data)
    w_name = data.role_block("w")
    x_name = data.role_block("x")
    y_name = data.role_block("y")
    n = data.n

    eta_x = ols(data, [w_name], [x_name]).residuals
    resid_y = ols(data, [x_name], [y_name]).residuals
    candidates = np.hstack([data.block_values(w_name), eta_x])
    q = candidates.shape[1]

    constraints = candidates.T @ resid_y  # (q, p_y)
    _, svals, vt = np.linalg.svd(constraints.T, full_matrices=True)
    crank = int(np.sum(svals > rank_tol * svals[0])) if svals.size and svals[0] > 0 else 0
    null_basis = vt[crank:].T  # (q, nullity)
    if null_basis.shape[1] == 0:
        raise NoValidSpace("orthogonality constraints leave no feasible instrument direction")

    # Gram matrix of the candidates within the feasible subspace; whitening
    # it makes unit coefficient vectors correspond to unit-norm instruments.
    gram = null_basis.T @ (candidates.T @ candidates) @ null_basis
    evals, evecs = np.linalg.eigh(gram)
    keep = evals > max(evals[-1], 0.0) * rank_tol
    usable = int(np.sum(keep))
    if usable == 0:
        raise NoValidSpace("candidate columns are degenerate inside the feasible subspace")
    if usable < count:
        raise InsufficientCount(usable, count)
    whiten = evecs[:, keep] / np.sqrt(evals[keep])  # (nullity, usable)

    strength = whiten.T @ (null_basis.T @ (candidates.T @ x))  # (usable, p_x)
    u_dirs, _, _ = np.linalg.svd(strength, full_matrices=True)
    coeffs = null_basis @ (whiten @ u_dirs[:, :count])  # (q, count)

    instruments = candidates @ coeffs
    norms = np.linalg.norm(instruments, axis=0)
    instruments = instruments / norms
    weights = coeffs / norms
    relevance = np.linalg.norm(x.T @ instruments, axis=0)
    validity_gap = float(np.abs(instruments.T @ resid_y).max() / n)
    return InstrumentSet(
        instruments=instruments,
        weights=weights,
        relevance=relevance,
        validity_gap=validity_gap,
    )


def nearest_valid(data: Dataset, instruments) -> tuple[np.ndarray, np.ndarray]:
    """Project each instrument column onto the exactly-valid set.

    Each column z_k is replaced by the closest z'_k (in Euclidean norm)
    satisfying z'_k' e_{y|x} = 0, i.e. its orthogonal projection onto the
    complement of the residual span. Returns the repaired matrix and the
    per-column deviations ||z_k - z'_k||. Residual directions below the
    solver noise floor are treated as zero, so a y exactly spanned by x
    leaves every instrument unchanged.
    """
    x, y = _treatment_outcome(data)
    z = _instrument_matrix(data, instruments)
    x_name = data.role_block("x")
    y_name = data.role_block("y")
    resid_y = ols(data, [x_name], [y_name]).residuals

    u, svals, _ = np.linalg.svd(resid_y, full_matrices=False)
    floor = 1e-12 * np.linalg.norm(y)
    basis = u[:, svals > floor]
    if basis.shape[1] == 0:
        return z.copy(), np.zeros(z.shape[1])
    repaired = z - basis @ (basis.T @ z)
    deviations = np.linalg.norm(z - repaired, axis=0)
    return repaired, deviations


def causal_effect(estimate: IvEstimate, x_from, x_to) -> np.ndarray:
    """Outcome shift of intervening from x_from to x_to: (x_to - x_from) beta."""
    start = np.asarray(x_from, dtype=np.float64).reshape(-1)
    stop = np.asarray(x_to, dtype=np.float64).reshape(-1)
    p_x = estimate.beta.shape[0]
    if start.shape != (p_x,) or stop.shape != (p_x,):
        raise ValueError(f"intervention vectors must have length {p_x}")
    return (stop - start) @ estimate.beta
