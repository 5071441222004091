"""Synthetic graph datasets: two-community graphs and ego networks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GenerationError, PreconditionError
from .graphs import AttributedGraph, induced_subgraph, is_connected


@dataclass(frozen=True)
class CommunityParams:
    """Two Erdos-Renyi blocks joined by a few random cross edges."""

    n_min: int = 12
    n_max: int = 20
    p_intra: float = 0.7
    inter_frac: float = 0.05
    max_retries: int = 200

    def __post_init__(self):
        if not (1 <= self.n_min <= self.n_max):
            raise PreconditionError("need 1 <= n_min <= n_max")
        if not (0.0 < self.p_intra <= 1.0):
            raise PreconditionError("p_intra must lie in (0, 1]")


def _er_block(rng, size, p):
    upper = rng.random((size, size)) < p
    adj = np.triu(upper, k=1)
    return adj | adj.T


def _sample_community(rng, params: CommunityParams):
    n = int(rng.integers(params.n_min, params.n_max + 1))
    n1 = (n + 1) // 2
    n2 = n - n1
    edge = np.zeros((n, n), dtype=bool)
    edge[:n1, :n1] = _er_block(rng, n1, params.p_intra)
    edge[n1:, n1:] = _er_block(rng, n2, params.p_intra)

    blocks_connected = (
        is_connected(_graph_from_adj(edge[:n1, :n1]))
        and is_connected(_graph_from_adj(edge[n1:, n1:]))
    )

    num_inter = int(np.ceil(params.inter_frac * n))
    cross = [(i, j) for i in range(n1) for j in range(n1, n)]
    picks = rng.choice(len(cross), size=min(num_inter, len(cross)), replace=False)
    for k in np.atleast_1d(picks):
        i, j = cross[int(k)]
        edge[i, j] = edge[j, i] = True

    g = _graph_from_adj(edge)
    return g, blocks_connected


def _graph_from_adj(adj):
    n = adj.shape[0]
    return AttributedGraph(np.zeros(n, dtype=np.int64),
                           adj.astype(np.int64), dx=1, de=2)


def generate_community_small(count: int, seed: int,
                             params: CommunityParams = CommunityParams()):
    """Sample `count` connected two-community graphs, deterministic in seed."""
    if count < 0:
        raise PreconditionError("count must be >= 0")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        for attempt in range(1, params.max_retries + 1):
            g, blocks_ok = _sample_community(rng, params)
            if blocks_ok and is_connected(g):
                out.append(g)
                break
        else:
            raise GenerationError(
                f"no connected community graph after {params.max_retries} "
                f"attempts (seed={seed}, graph index {len(out)})")
    return out


def extract_ego_graphs(base: AttributedGraph, radius: int, count: int,
                       seed: int, size_range=(4, 18)):
    """Induced subgraphs on <= radius-hop neighborhoods of sampled centers.

    Every node of `base` whose ego net falls inside `size_range` is a
    candidate; `count` of them are drawn without replacement.
    """
    lo, hi = size_range
    if radius < 1:
        raise PreconditionError("radius must be >= 1")
    if count < 0:
        raise PreconditionError("count must be >= 0")
    adj = base.edge_types != 0
    candidates = []
    for center in range(base.n):
        nodes = _k_hop(adj, center, radius)
        if lo <= len(nodes) <= hi:
            candidates.append(nodes)
    if len(candidates) < count:
        raise GenerationError(
            f"only {len(candidates)} ego nets of size in [{lo}, {hi}] exist, "
            f"need {count}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(candidates), size=count, replace=False)
    return [induced_subgraph(base, candidates[int(k)]) for k in np.atleast_1d(picks)]


def _k_hop(adj, center, radius):
    frontier = {center}
    seen = {center}
    for _ in range(radius):
        nxt = set()
        for u in frontier:
            nxt.update(int(v) for v in np.flatnonzero(adj[u]))
        frontier = nxt - seen
        seen |= nxt
        if not frontier:
            break
    return sorted(seen)
