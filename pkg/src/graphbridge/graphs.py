"""Attributed graph data types and elementary graph operations.

Graphs carry categorical node and edge labels. Edge label 0 is reserved for
"no edge"; the edge matrix is symmetric with a zero diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError


@dataclass
class AttributedGraph:
    """Node-type vector plus a symmetric edge-type matrix.

    node_types: (n,) ints in [0, dx)
    edge_types: (n, n) ints in [0, de), symmetric, zero diagonal
    """

    node_types: np.ndarray
    edge_types: np.ndarray
    dx: int = 1
    de: int = 2

    def __post_init__(self):
        self.node_types = np.asarray(self.node_types, dtype=np.int64)
        self.edge_types = np.asarray(self.edge_types, dtype=np.int64)
        self.validate()

    @property
    def n(self) -> int:
        return self.node_types.shape[0]

    def validate(self):
        n = self.node_types.shape[0]
        if n < 1:
            raise PreconditionError("graph must have at least one node")
        if self.edge_types.shape != (n, n):
            raise PreconditionError(
                f"edge matrix shape {self.edge_types.shape} does not match n={n}")
        if not np.array_equal(self.edge_types, self.edge_types.T):
            raise PreconditionError("edge matrix must be symmetric")
        if np.any(np.diag(self.edge_types) != 0):
            raise PreconditionError("edge matrix diagonal must be zero")
        if np.any(self.node_types < 0) or np.any(self.node_types >= self.dx):
            raise PreconditionError(f"node labels must lie in [0, {self.dx})")
        if np.any(self.edge_types < 0) or np.any(self.edge_types >= self.de):
            raise PreconditionError(f"edge labels must lie in [0, {self.de})")

    def adjacency(self) -> np.ndarray:
        """Binarized adjacency: any nonzero edge label is an edge."""
        return (self.edge_types != 0).astype(np.float64)

    def degrees(self) -> np.ndarray:
        return (self.edge_types != 0).sum(axis=1)

    def num_edges(self) -> int:
        return int((self.edge_types != 0).sum() // 2)

    def copy(self) -> "AttributedGraph":
        return AttributedGraph(self.node_types.copy(), self.edge_types.copy(),
                               dx=self.dx, de=self.de)


def graphs_equal(a: AttributedGraph, b: AttributedGraph) -> bool:
    return (a.dx == b.dx and a.de == b.de
            and np.array_equal(a.node_types, b.node_types)
            and np.array_equal(a.edge_types, b.edge_types))


def permute(g: AttributedGraph, perm) -> AttributedGraph:
    """Relabel nodes: node i of the output is node perm[i] of the input."""
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (g.n,) or not np.array_equal(np.sort(perm), np.arange(g.n)):
        raise PreconditionError("perm must be a bijection on [0, n)")
    return AttributedGraph(
        g.node_types[perm],
        g.edge_types[np.ix_(perm, perm)],
        dx=g.dx,
        de=g.de,
    )


def is_connected(g: AttributedGraph) -> bool:
    n = g.n
    if n == 1:
        return True
    adj = g.edge_types != 0
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in np.flatnonzero(adj[u]):
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return bool(seen.all())


def induced_subgraph(g: AttributedGraph, nodes) -> AttributedGraph:
    nodes = np.asarray(sorted(int(v) for v in nodes), dtype=np.int64)
    return AttributedGraph(
        g.node_types[nodes],
        g.edge_types[np.ix_(nodes, nodes)],
        dx=g.dx,
        de=g.de,
    )


@dataclass
class GraphBatch:
    """Padded feature tensors for a list of graphs.

    x: (B, N, dx_in), e: (B, N, N, de_in), y: (B, dy), mask: (B, N) bool.
    Masked-out rows and columns are all-zero.
    """

    x: np.ndarray
    e: np.ndarray
    y: np.ndarray
    mask: np.ndarray
    n: np.ndarray

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @property
    def max_n(self) -> int:
        return self.x.shape[1]

    def pair_mask(self) -> np.ndarray:
        """(B, N, N) mask of valid off-diagonal node pairs."""
        m = self.mask.astype(np.float64)
        pm = m[:, :, None] * m[:, None, :]
        idx = np.arange(self.max_n)
        pm[:, idx, idx] = 0.0
        return pm
