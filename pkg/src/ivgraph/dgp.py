"""Linear-Gaussian structural equation simulator and its analytic moments.

Every estimator in the toolkit is validated against this module: `simulate`
draws finite samples from a block graph, `population_covariance` gives the
exact joint covariance the same graph implies, and `analytic_plims` turns
that covariance into probability limits for the OLS and IV estimators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .dag import BlockGraph, sort_blocks
from .errors import SingularMoment
from .regress import Block, Dataset

__all__ = [
    "PopulationMoments",
    "Scenario",
    "simulate",
    "population_covariance",
    "analytic_plims",
    "fig1",
    "fig2",
    "fig3",
    "PRESETS",
]


@dataclass(frozen=True)
class PopulationMoments:
    """Exact covariance over all blocks, observed and latent.

    `sigma` is ordered by the graph's dependency order; `index` maps each
    block name to its (start, stop) column range within sigma.
    """

    sigma: np.ndarray
    index: Mapping[str, tuple[int, int]]
    order: tuple[str, ...]

    def block(self, rows: str, cols: str) -> np.ndarray:
        r = self.index[rows]
        c = self.index[cols]
        return self.sigma[r[0]:r[1], c[0]:c[1]]


@dataclass(frozen=True)
class Scenario:
    """A named graph plus the role tags its columns carry when simulated."""

    name: str
    graph: BlockGraph
    roles: Mapping[str, str]
    instrument_block: str | None = None


def _default_roles(graph: BlockGraph) -> dict[str, str]:
    # Blocks named after a role get it; anything else is treated as latent.
    return {name: (name if name in ("w", "x", "y", "z") else "latent") for name in graph.block_names}


def _column_names(name: str, width: int) -> list[str]:
    if width == 1:
        return [name]
    return [f"{name}_{j + 1}" for j in range(width)]


def simulate(graph: BlockGraph, n: int, seed: int, roles: Mapping[str, str] | None = None) -> Dataset:
    """Draw n rows from the structural system with independent Gaussian noise.

    Blocks are generated in dependency order: each equals its parents
    weighted by the edge coefficients plus zero-mean noise at the declared
    scales. Latent blocks are included in the output, tagged with role
    `latent` so estimators skip them. Deterministic given the seed.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    order = sort_blocks(graph)
    role_map = dict(roles) if roles is not None else _default_roles(graph)

    rng = np.random.default_rng(seed)
    values: dict[str, np.ndarray] = {}
    for name in order:
        width = graph.width(name)
        block = rng.standard_normal((n, width)) * graph.noise_scales[name]
        for parent, coef in graph.parents_of(name):
            block = block + values[parent] @ coef
        values[name] = block

    columns: list[str] = []
    blocks: dict[str, Block] = {}
    start = 0
    for name in order:
        width = graph.width(name)
        columns.extend(_column_names(name, width))
        blocks[name] = Block(start, start + width, role_map.get(name, "latent"))
        start += width
    matrix = np.hstack([values[name] for name in order])
    return Dataset(columns=tuple(columns), values=matrix, blocks=blocks, centered=False)


def population_covariance(graph: BlockGraph) -> PopulationMoments:
    """Exact covariance of the joint distribution the graph implies.

    With rows as observations the system reads v = v B + e, where B stacks
    the edge coefficient matrices (strictly upper triangular in dependency
    order) and e has diagonal covariance D of squared noise scales, so
    Sigma = (I - B)^-T D (I - B)^-1.
    """
    order = sort_blocks(graph)
    index: dict[str, tuple[int, int]] = {}
    start = 0
    for name in order:
        width = graph.width(name)
        index[name] = (start, start + width)
        start += width
    total = start

    b = np.zeros((total, total))
    for parent, child, coef in graph.edges:
        pr = index[parent]
        cr = index[child]
        b[pr[0]:pr[1], cr[0]:cr[1]] = coef
    d = np.zeros(total)
    for name in order:
        r = index[name]
        d[r[0]:r[1]] = np.asarray(graph.noise_scales[name]) ** 2

    inv = np.linalg.inv(np.eye(total) - b)
    sigma = inv.T @ (d[:, None] * inv)
    sigma = 0.5 * (sigma + sigma.T)
    return PopulationMoments(sigma=sigma, index=index, order=tuple(order))


def _solve_moment(a: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    smin = np.linalg.svd(a, compute_uv=False)[-1] if a.size else 0.0
    smax = np.abs(a).max() if a.size else 0.0
    if smin <= 1e-12 * max(smax, 1.0):
        raise SingularMoment(f"{what} moment block is singular (smallest singular value {smin:.3e})")
    return np.linalg.solve(a, b)


def analytic_plims(
    graph: BlockGraph, z_block: str, x_block: str, y_block: str
) -> tuple[np.ndarray, np.ndarray]:
    """Probability limits (OLS, IV) for y on x with z as instrument block.

    plim OLS = Sigma_xx^-1 Sigma_xy. For a square first stage the IV limit
    is Sigma_zx^-1 Sigma_zy; otherwise the two-stage sandwich
    (Sigma_zx' Sigma_zz^-1 Sigma_zx)^-1 Sigma_zx' Sigma_zz^-1 Sigma_zy.
    """
    moments = population_covariance(graph)
    sigma_xx = moments.block(x_block, x_block)
    sigma_xy = moments.block(x_block, y_block)
    sigma_zx = moments.block(z_block, x_block)
    sigma_zy = moments.block(z_block, y_block)
    sigma_zz = moments.block(z_block, z_block)

    plim_ols = _solve_moment(sigma_xx, sigma_xy, "treatment")
    if sigma_zx.shape[0] == sigma_zx.shape[1]:
        plim_iv = _solve_moment(sigma_zx, sigma_zy, "first-stage")
    else:
        proj = _solve_moment(sigma_zz, np.hstack([sigma_zx, sigma_zy]), "instrument")
        k = sigma_zx.shape[1]
        plim_iv = _solve_moment(sigma_zx.T @ proj[:, :k], sigma_zx.T @ proj[:, k:], "first-stage")
    return plim_ols, plim_iv


def fig1(beta_wx: float = 1.0, beta_wy: float = 1.0, beta_xy: float = 1.0) -> Scenario:
    """Three observed blocks w -> x -> y with a direct w -> y edge.

    All noise scales are 1. No latent confounding, so with beta_wy = 0 the
    w block is a textbook valid instrument for x.
    """
    graph = BlockGraph(
        blocks=(("w", 1), ("x", 1), ("y", 1)),
        edges=(
            ("w", "x", np.array([[beta_wx]])),
            ("w", "y", np.array([[beta_wy]])),
            ("x", "y", np.array([[beta_xy]])),
        ),
        noise_scales={"w": 1.0, "x": 1.0, "y": 1.0},
    )
    return Scenario(name="fig1", graph=graph, roles={"w": "w", "x": "x", "y": "y"}, instrument_block="w")


def fig2(
    beta_wx: float = 1.0,
    beta_wy: float = 0.5,
    beta_xy: float = 1.0,
    confounder_loading: float = 0.3,
    uv_coupling: float = 0.5,
) -> Scenario:
    """fig1 plus two latent blocks u, v loading on every observed block.

    u also feeds v (`uv_coupling`). With the default direct effect
    beta_wy = 0.5 the w block is an invalid instrument; the confounder
    loading is kept modest so the observed covariances stay small.
    """
    load = np.array([[confounder_loading]])
    graph = BlockGraph(
        blocks=(("u", 1), ("v", 1), ("w", 1), ("x", 1), ("y", 1)),
        edges=(
            ("u", "v", np.array([[uv_coupling]])),
            ("u", "w", load),
            ("u", "x", load),
            ("u", "y", load),
            ("v", "w", load),
            ("v", "x", load),
            ("v", "y", load),
            ("w", "x", np.array([[beta_wx]])),
            ("w", "y", np.array([[beta_wy]])),
            ("x", "y", np.array([[beta_xy]])),
        ),
        noise_scales={"u": 1.0, "v": 1.0, "w": 1.0, "x": 1.0, "y": 1.0},
    )
    roles = {"u": "latent", "v": "latent", "w": "w", "x": "x", "y": "y"}
    return Scenario(name="fig2", graph=graph, roles=roles, instrument_block="w")


def fig3(
    beta_zx: float = 1.0,
    beta_xy: float = 1.0,
    confounder_loading: float = 1.0,
    v_to_z: float = 0.0,
    v_to_x: float = 0.0,
) -> Scenario:
    """Valid-instrument layout: z -> x -> y with latent u confounding x and y.

    A second latent block v may confound z and x (harmless for instrument
    validity); its loadings default to zero, which gives the closed-form
    covariances Sigma_xx = 3, Sigma_zx = 1, Sigma_xy = 4, Sigma_zy = 1 at
    unit coefficients and noises.
    """
    graph = BlockGraph(
        blocks=(("u", 1), ("v", 1), ("z", 1), ("x", 1), ("y", 1)),
        edges=(
            ("u", "x", np.array([[confounder_loading]])),
            ("u", "y", np.array([[confounder_loading]])),
            ("v", "z", np.array([[v_to_z]])),
            ("v", "x", np.array([[v_to_x]])),
            ("z", "x", np.array([[beta_zx]])),
            ("x", "y", np.array([[beta_xy]])),
        ),
        noise_scales={"u": 1.0, "v": 1.0, "z": 1.0, "x": 1.0, "y": 1.0},
    )
    roles = {"u": "latent", "v": "latent", "z": "z", "x": "x", "y": "y"}
    return Scenario(name="fig3", graph=graph, roles=roles, instrument_block="z")


PRESETS = {"fig1": fig1, "fig2": fig2, "fig3": fig3}
