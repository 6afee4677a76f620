"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from ivgraph import Block, Dataset, center


def make_dataset(columns, values, roles, centered=False) -> Dataset:
    """Dataset from a dense matrix and a {block_name: (start, stop, role)} map."""
    blocks = {name: Block(start, stop, role) for name, (start, stop, role) in roles.items()}
    data = Dataset(columns=tuple(columns), values=np.asarray(values, dtype=float), blocks=blocks)
    return center(data) if centered else data


def random_wxy(rng, n, p_w=3, p_x=1, p_y=1, direct=0.4) -> Dataset:
    """Centered dataset with w, x, y blocks and a direct w->y leak."""
    w = rng.standard_normal((n, p_w))
    bx = rng.uniform(-1.0, 1.0, size=(p_w, p_x))
    x = w @ bx + rng.standard_normal((n, p_x))
    by = rng.uniform(0.3, 1.0, size=(p_x, p_y))
    leak = rng.uniform(-direct, direct, size=(p_w, p_y))
    y = x @ by + w @ leak + rng.standard_normal((n, p_y))
    columns = (
        [f"w{i + 1}" for i in range(p_w)]
        + [f"x{i + 1}" for i in range(p_x)]
        + [f"y{i + 1}" for i in range(p_y)]
    )
    return make_dataset(
        columns,
        np.hstack([w, x, y]),
        {
            "w": (0, p_w, "w"),
            "x": (p_w, p_w + p_x, "x"),
            "y": (p_w + p_x, p_w + p_x + p_y, "y"),
        },
        centered=True,
    )
