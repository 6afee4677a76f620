"""Least squares over dataset blocks.

All fits are intercept-free: data must be centered first (`center`).
Coefficients come from a singular value decomposition of the predictor
matrix, which doubles as the rank check.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import RankDeficient, RoleError

__all__ = ["Block", "Dataset", "RegressionResult", "center", "ols", "residual_block"]

RANK_TOL = 1e-10

ROLES = ("w", "x", "y", "z", "latent")


@dataclass(frozen=True)
class Block:
    """Contiguous column range [start, stop) with an estimation role."""

    start: int
    stop: int
    role: str


@dataclass(frozen=True)
class Dataset:
    """Column-named numeric matrix with role-tagged blocks.

    `blocks` maps a block name to a contiguous column range and one of the
    roles w/x/y/z/latent. Latent blocks may repeat; each of w, x, y, z may
    tag at most one block. Columns outside every block are carried along
    but ignored by estimators.
    """

    columns: tuple[str, ...]
    values: np.ndarray
    blocks: Mapping[str, Block]
    centered: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"values must be a 2-d matrix, got shape {values.shape}")
        n, p = values.shape
        if n < 2:
            raise ValueError(f"need at least 2 rows, got {n}")
        if len(self.columns) != p:
            raise ValueError(f"{len(self.columns)} column names for {p} columns")
        if len(set(self.columns)) != p:
            raise ValueError("column names must be unique")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(f"non-finite value at row {bad[0]}, column {self.columns[bad[1]]!r}")

        used = np.zeros(p, dtype=bool)
        role_seen: dict[str, str] = {}
        for name, block in self.blocks.items():
            if not (0 <= block.start < block.stop <= p):
                raise ValueError(f"block {name!r} range [{block.start}, {block.stop}) out of bounds")
            if block.role not in ROLES:
                raise ValueError(f"block {name!r} has unknown role {block.role!r}")
            if used[block.start:block.stop].any():
                raise ValueError(f"block {name!r} overlaps another block")
            used[block.start:block.stop] = True
            if block.role != "latent":
                if block.role in role_seen:
                    raise ValueError(
                        f"role {block.role!r} assigned to both {role_seen[block.role]!r} and {name!r}"
                    )
                role_seen[block.role] = name

        if self.centered:
            means = values.mean(axis=0)
            limits = 1e-12 * (values.std(axis=0) + 1.0)
            if np.any(np.abs(means) > limits):
                raise ValueError("centered flag set but column means are not zero")

        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "blocks", dict(self.blocks))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def block_values(self, name: str) -> np.ndarray:
        block = self.blocks[name]
        return self.values[:, block.start:block.stop]

    def block_width(self, name: str) -> int:
        block = self.blocks[name]
        return block.stop - block.start

    def block_columns(self, name: str) -> tuple[str, ...]:
        block = self.blocks[name]
        return self.columns[block.start:block.stop]

    def role_block(self, role: str) -> str:
        """Name of the unique block carrying `role`."""
        hits = [name for name, block in self.blocks.items() if block.role == role]
        if not hits:
            raise RoleError(f"dataset has no block with role {role!r}")
        if len(hits) > 1:
            raise RoleError(f"role {role!r} is ambiguous: blocks {hits}")
        return hits[0]

    def has_role(self, role: str) -> bool:
        return any(block.role == role for block in self.blocks.values())

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Horizontal stack of the named blocks, in the given order."""
        return np.hstack([self.block_values(name) for name in names])


@dataclass(frozen=True)
class RegressionResult:
    """Least squares fit of response blocks on predictor blocks.

    coefficients : (predictor width, response width)
    residuals : responses - predictors @ coefficients
    orthogonality_gap : max over predictor/response pairs of
        |predictor' residual| / n (under the fit weighting)
    rank : effective rank of the predictor matrix
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    orthogonality_gap: float
    rank: int


def center(data: Dataset) -> Dataset:
    """Remove column means; sets the centered flag, preserves scales."""
    values = data.values - data.values.mean(axis=0)
    return replace(data, values=values, centered=True)


def _check_weights(weights, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape != (n,):
        raise ValueError(f"weights must have length {n}, got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("weights must be positive and finite")
    return w


def ols(
    data: Dataset,
    predictors: Sequence[str],
    responses: Sequence[str],
    weights=None,
    rank_tol: float = RANK_TOL,
) -> RegressionResult:
    """Ordinary or diagonally weighted least squares on centered blocks.

    Parameters
    ----------
    data : Dataset
        Must be centered.
    predictors, responses : block names
        Stacked in order into the predictor and response matrices.
    weights : optional positive n-vector
        Row weights; both sides of the normal equations are rescaled by
        sqrt(weight), so first and second moments see the same weighting.
    rank_tol : float
        Relative singular value cutoff for the full-rank requirement.

    Raises
    ------
    RankDeficient
        When the smallest singular value of the (weighted) predictor
        matrix falls below rank_tol times the largest.
    """
    if not data.centered:
        raise ValueError("data must be centered before estimation")
    x = data.matrix(predictors)
    y = data.matrix(responses)
    n = data.n

    if weights is not None:
        wvec = _check_weights(weights, n)
        sw = np.sqrt(wvec)
        xw = x * sw[:, None]
        yw = y * sw[:, None]
    else:
        wvec = None
        xw, yw = x, y

    u, s, vt = np.linalg.svd(xw, full_matrices=False)
    if s[0] == 0.0:
        raise RankDeficient(0, rank_tol)
    rank = int(np.sum(s > rank_tol * s[0]))
    if rank < x.shape[1]:
        raise RankDeficient(rank, rank_tol)

    coef = vt.T @ ((u.T @ yw) / s[:, None])
    residuals = y - x @ coef
    weighted_resid = residuals if wvec is None else residuals * wvec[:, None]
    gap = float(np.abs(x.T @ weighted_resid).max() / n)
    return RegressionResult(coefficients=coef, residuals=residuals, orthogonality_gap=gap, rank=rank)


def residual_block(
    data: Dataset,
    target: str,
    given: Sequence[str],
    weights=None,
    rank_tol: float = RANK_TOL,
) -> np.ndarray:
    """Residuals of the target block regressed on the given blocks."""
    return ols(data, given, [target], weights=weights, rank_tol=rank_tol).residuals
