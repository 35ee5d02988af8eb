"""Chimera graph construction.

A C_n Chimera graph is an n x n grid of K_{4,4} unit cells. Node ids are
canonical: ``8 * (n * row + col) + 4 * side + index`` with ``side`` 0 for
the left half of a cell and 1 for the right half.

Left nodes couple to the cell directly below (same column, next row); right
nodes couple to the cell directly to the right (same row, next column).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

LEFT, RIGHT = 0, 1


def node_id(n: int, row: int, col: int, side: int, index: int) -> int:
    return 8 * (n * row + col) + 4 * side + index


def node_coords(n: int, node: int) -> tuple[int, int, int, int]:
    """Inverse of :func:`node_id`: ``(row, col, side, index)``."""
    cell, rem = divmod(int(node), 8)
    row, col = divmod(cell, n)
    side, index = divmod(rem, 4)
    return row, col, side, index


def _full_edges(n: int) -> np.ndarray:
    edges = []
    for row in range(n):
        for col in range(n):
            for i in range(4):
                for j in range(4):
                    edges.append((node_id(n, row, col, LEFT, i), node_id(n, row, col, RIGHT, j)))
    # row couplers: left halves of vertically adjacent cells
    for row in range(n - 1):
        for col in range(n):
            for k in range(4):
                edges.append((node_id(n, row, col, LEFT, k), node_id(n, row + 1, col, LEFT, k)))
    # column couplers: right halves of horizontally adjacent cells
    for row in range(n):
        for col in range(n - 1):
            for k in range(4):
                edges.append((node_id(n, row, col, RIGHT, k), node_id(n, row, col + 1, RIGHT, k)))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class ChimeraGraph:
    """Full or masked C_n graph.

    ``nodes`` holds the active node ids in increasing order and ``edges`` the
    active edges in canonical edge order. Configurations and weight vectors
    are indexed by position in these arrays, not by node id.
    """

    n: int
    nodes: np.ndarray
    edges: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.edges.setflags(write=False)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def is_masked(self) -> bool:
        n = self.n
        return self.num_nodes != 8 * n * n or self.num_edges != 16 * n * n + 8 * n * (n - 1)

    @cached_property
    def position(self) -> np.ndarray:
        """Map node id -> position in ``nodes`` (-1 for masked nodes)."""
        pos = np.full(8 * self.n**2, -1, dtype=np.int64)
        pos[self.nodes] = np.arange(self.num_nodes)
        return pos

    @cached_property
    def edge_index(self) -> np.ndarray:
        """Edges as (E, 2) array of node positions."""
        return self.position[self.edges]

    @cached_property
    def coords(self) -> np.ndarray:
        """(N, 4) array of ``(row, col, side, index)`` per active node."""
        return np.array([node_coords(self.n, v) for v in self.nodes], dtype=np.int64).reshape(-1, 4)

    def cell_of(self, node: int) -> tuple[int, int, str, int]:
        row, col, side, index = node_coords(self.n, node)
        return row, col, ("left", "right")[side], index

    @cached_property
    def color(self) -> np.ndarray:
        """Two-coloring (0 = A, 1 = B) used by the blocked Gibbs sampler."""
        c = self.coords
        return ((c[:, 0] + c[:, 1] + c[:, 2]) % 2).astype(np.int8)

    def bipartition(self, node: int) -> str:
        return "AB"[int(self.color[self.position[node]])]

    def cell_nodes(self, row: int, col: int) -> np.ndarray:
        """Positions of the active nodes in unit cell (row, col)."""
        c = self.coords
        return np.flatnonzero((c[:, 0] == row) & (c[:, 1] == col))

    def subgraph(self, nodes=None, edges=None) -> "ChimeraGraph":
        """Masked variant keeping the given node ids and edge pairs.

        Edges touching a dropped node are dropped as well.
        """
        keep_nodes = self.nodes if nodes is None else np.asarray(sorted(set(int(v) for v in nodes)), dtype=np.int64)
        if not np.isin(keep_nodes, self.nodes).all():
            raise ValueError("subgraph nodes must be nodes of the parent graph")
        mask = np.isin(self.edges, keep_nodes).all(axis=1)
        if edges is not None:
            wanted = {tuple(sorted((int(u), int(v)))) for u, v in edges}
            present = {tuple(e) for e in self.edges.tolist()}
            if not wanted <= present:
                raise ValueError("subgraph edges must be edges of the parent graph")
            mask &= np.array([tuple(e) in wanted for e in self.edges.tolist()], dtype=bool)
        return ChimeraGraph(self.n, keep_nodes.copy(), self.edges[mask].copy())

    def same_as(self, other: "ChimeraGraph") -> bool:
        return (
            self.n == other.n
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.edges, other.edges)
        )


def build_chimera(n: int) -> ChimeraGraph:
    """Full C_n graph with 8n^2 nodes and 16n^2 + 8n(n-1) edges."""
    if int(n) != n or n < 1:
        raise ValueError(f"Chimera size must be a positive integer, got {n!r}")
    n = int(n)
    return ChimeraGraph(n, np.arange(8 * n * n, dtype=np.int64), _full_edges(n))
