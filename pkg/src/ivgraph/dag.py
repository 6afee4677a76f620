"""Block-structured directed acyclic graphs.

Nodes are named blocks of one or more columns; each edge carries a
coefficient matrix of shape (parent width x child width). The graph is
both the causal hypothesis and, together with per-column noise scales,
a complete data-generating specification.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import CycleError

__all__ = ["BlockGraph", "sort_blocks"]


def _as_scales(width: int, scales) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(scales, dtype=np.float64))
    if arr.size == 1 and width > 1:
        arr = np.full(width, float(arr[0]))
    return arr


@dataclass(frozen=True)
class BlockGraph:
    """DAG over variable blocks with per-edge coefficient matrices.

    Parameters
    ----------
    blocks : sequence of (name, width)
        Declaration order is meaningful: it breaks ties in `sort_blocks`.
    edges : sequence of (parent, child, coefficients)
        `coefficients` has shape (parent width, child width); scalars are
        accepted for 1x1 edges.
    noise_scales : mapping name -> scale(s)
        Error standard deviation per column of the block; a scalar is
        broadcast across the block.
    """

    blocks: tuple[tuple[str, int], ...]
    edges: tuple[tuple[str, str, np.ndarray], ...]
    noise_scales: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        blocks = tuple((str(name), int(width)) for name, width in self.blocks)
        names = [name for name, _ in blocks]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate block names in {names}")
        widths = dict(blocks)
        for name, width in blocks:
            if width < 1:
                raise ValueError(f"block {name!r} must have positive width, got {width}")

        edges = []
        seen = set()
        for parent, child, coef in self.edges:
            if parent not in widths:
                raise ValueError(f"edge references unknown block {parent!r}")
            if child not in widths:
                raise ValueError(f"edge references unknown block {child!r}")
            if parent == child:
                raise ValueError(f"self-edge on block {parent!r}")
            if (parent, child) in seen:
                raise ValueError(f"duplicate edge {parent!r} -> {child!r}")
            seen.add((parent, child))
            mat = np.atleast_2d(np.asarray(coef, dtype=np.float64))
            if mat.shape != (widths[parent], widths[child]):
                raise ValueError(
                    f"edge {parent!r} -> {child!r} coefficient shape {mat.shape} does not match "
                    f"block widths ({widths[parent]}, {widths[child]})"
                )
            mat = mat.copy()
            mat.flags.writeable = False
            edges.append((parent, child, mat))

        scales = {}
        for name, width in blocks:
            arr = _as_scales(width, self.noise_scales.get(name, 1.0))
            if arr.shape != (width,):
                raise ValueError(f"noise scales for block {name!r} must have length {width}")
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ValueError(f"noise scales for block {name!r} must be positive, got {arr}")
            arr.flags.writeable = False
            scales[name] = arr

        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "edges", tuple(edges))
        object.__setattr__(self, "noise_scales", scales)

    @property
    def block_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.blocks)

    def width(self, name: str) -> int:
        for block, width in self.blocks:
            if block == name:
                return width
        raise KeyError(name)

    @property
    def total_width(self) -> int:
        return sum(width for _, width in self.blocks)

    def parents_of(self, name: str) -> list[tuple[str, np.ndarray]]:
        return [(parent, coef) for parent, child, coef in self.edges if child == name]

    def children_of(self, name: str) -> list[str]:
        return [child for parent, child, _ in self.edges if parent == name]


def _find_cycle(children: Mapping[str, list[str]], candidates: Iterable[str]) -> tuple[str, ...]:
    # DFS until some node reappears on the current path; return that loop.
    remaining = set(candidates)
    for start in remaining:
        path: list[str] = []
        on_path: set[str] = set()

        def visit(node: str) -> tuple[str, ...] | None:
            if node in on_path:
                return tuple(path[path.index(node):])
            if node not in remaining:
                return None
            path.append(node)
            on_path.add(node)
            for nxt in children.get(node, []):
                found = visit(nxt)
                if found is not None:
                    return found
            path.pop()
            on_path.remove(node)
            return None

        cycle = visit(start)
        if cycle is not None:
            return cycle
    return tuple(remaining)


def sort_blocks(graph: BlockGraph) -> list[str]:
    """Return the block names in dependency order.

    Every edge points from an earlier to a later position in the returned
    list. Blocks that become ready simultaneously keep their declaration
    order, so the result is deterministic.

    Raises:
        CycleError: when no topological order exists; the error names at
            least one block that lies on a cycle.
    """
    names = list(graph.block_names)
    position = {name: i for i, name in enumerate(names)}
    indegree = {name: 0 for name in names}
    children: dict[str, list[str]] = {name: [] for name in names}
    for parent, child, _ in graph.edges:
        indegree[child] += 1
        children[parent].append(child)

    ready = [position[n] for n in names if indegree[n] == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        name = names[heapq.heappop(ready)]
        order.append(name)
        for child in children[name]:
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(ready, position[child])
    if len(order) < len(names):
        stuck = [n for n in names if indegree[n] > 0]
        raise CycleError(_find_cycle(children, stuck))
    return order
