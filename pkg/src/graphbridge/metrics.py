"""Graph-set evaluation: MMD over degree/clustering/orbit statistics with a
Gaussian earth-mover's-distance kernel, simple valence validity, and
WL-hash uniqueness/novelty.

Bandwidths follow the conventions of the common generic-graph evaluation
scripts (sigma 1.0 for degree and orbit statistics, 100 bins and sigma 0.1
for clustering coefficients) so numbers are comparable across codebases.
"""

from __future__ import annotations

from dataclasses import dataclass
from hashlib import blake2b
from itertools import combinations

import numpy as np

from .errors import PreconditionError
from .graphs import AttributedGraph, is_connected

CLUSTERING_BINS = 100
DEGREE_SIGMA = 1.0
CLUSTERING_SIGMA = 0.1
ORBIT_SIGMA = 1.0
NUM_ORBITS = 11
WL_ROUNDS = 3


@dataclass
class Histogram:
    """Nonnegative mass per bin, with optional explicit bin edges."""

    mass: np.ndarray
    bin_edges: np.ndarray | None = None

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=np.float64)
        if np.any(self.mass < 0):
            raise PreconditionError("histogram mass must be nonnegative")
        if self.bin_edges is not None:
            self.bin_edges = np.asarray(self.bin_edges, dtype=np.float64)

    @property
    def bins(self) -> int:
        return self.mass.shape[0]

    @property
    def normalized(self) -> bool:
        return abs(float(self.mass.sum()) - 1.0) <= 1e-12

    def normalize(self) -> "Histogram":
        total = float(self.mass.sum())
        if total <= 0.0:
            return Histogram(self.mass.copy(), self.bin_edges)
        return Histogram(self.mass / total, self.bin_edges)

    def same_binning(self, other: "Histogram") -> bool:
        if self.bins != other.bins:
            return False
        if (self.bin_edges is None) != (other.bin_edges is None):
            return False
        if self.bin_edges is not None:
            return bool(np.allclose(self.bin_edges, other.bin_edges))
        return True


def degree_hist(g: AttributedGraph, num_bins: int | None = None) -> Histogram:
    """Normalized degree distribution over integer bins [0, num_bins)."""
    degrees = g.degrees()
    if num_bins is None:
        num_bins = g.n
    if degrees.max(initial=0) >= num_bins:
        raise PreconditionError(f"degree {degrees.max()} >= num_bins {num_bins}")
    counts = np.bincount(degrees, minlength=num_bins).astype(np.float64)
    return Histogram(counts, np.arange(num_bins + 1, dtype=np.float64)).normalize()


def clustering_coefficients(g: AttributedGraph) -> np.ndarray:
    adj = g.adjacency()
    deg = adj.sum(axis=1)
    triangles = np.diag(adj @ adj @ adj) / 2.0
    denom = deg * (deg - 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        coef = np.where(denom > 0, 2.0 * triangles / np.maximum(denom, 1.0), 0.0)
    return coef


def clustering_hist(g: AttributedGraph, bins: int = CLUSTERING_BINS) -> Histogram:
    """Normalized histogram of clustering coefficients on [0, 1]."""
    coef = clustering_coefficients(g)
    counts, edges = np.histogram(coef, bins=bins, range=(0.0, 1.0))
    return Histogram(counts.astype(np.float64), edges).normalize()


def _enumerate_connected_quads(adj_sets, n):
    """ESU enumeration of all connected induced 4-node subgraphs."""
    quads = []

    def extend(sub, ext, root):
        if len(sub) == 4:
            quads.append(tuple(sub))
            return
        ext = list(ext)
        while ext:
            w = ext.pop()
            exclusive = {u for u in adj_sets[w]
                         if u > root and u not in sub
                         and all(u not in adj_sets[s] for s in sub)}
            extend(sub + [w], [u for u in ext] + sorted(exclusive), root)

    for v in range(n):
        extend([v], sorted(u for u in adj_sets[v] if u > v), v)
    return quads


_GRAPHLET_ORBITS = {
    # (edge count, sorted degree seq) -> {degree within subgraph: orbit id}
    (3, (1, 1, 2, 2)): {1: 0, 2: 1},    # path: ends, middles
    (3, (1, 1, 1, 3)): {1: 2, 3: 3},    # star: leaves, hub
    (4, (2, 2, 2, 2)): {2: 4},          # cycle
    (4, (1, 2, 2, 3)): {1: 5, 2: 6, 3: 7},  # triangle with a tail
    (5, (2, 2, 3, 3)): {2: 8, 3: 9},    # diamond
    (6, (3, 3, 3, 3)): {3: 10},         # clique
}


def orbit_counts(g: AttributedGraph) -> np.ndarray:
    """Per-node participation counts in the 11 connected 4-node orbits."""
    n = g.n
    adj = g.edge_types != 0
    adj_sets = [set(np.flatnonzero(adj[v]).tolist()) for v in range(n)]
    counts = np.zeros((n, NUM_ORBITS), dtype=np.float64)
    for quad in _enumerate_connected_quads(adj_sets, n):
        local_deg = {v: sum(1 for u in quad if u != v and u in adj_sets[v])
                     for v in quad}
        m = sum(local_deg.values()) // 2
        key = (m, tuple(sorted(local_deg.values())))
        orbit_map = _GRAPHLET_ORBITS[key]
        for v in quad:
            counts[v, orbit_map[local_deg[v]]] += 1.0
    return counts


def orbit_hist(g: AttributedGraph) -> Histogram:
    """Mean per-node orbit counts as one normalized 11-bin histogram."""
    mean_counts = orbit_counts(g).mean(axis=0)
    return Histogram(mean_counts, np.arange(NUM_ORBITS + 1, dtype=np.float64)
                     ).normalize()


def emd(h1: Histogram, h2: Histogram) -> float:
    """1-D Wasserstein-1 with unit inter-bin distance, via prefix sums."""
    if not h1.same_binning(h2):
        raise PreconditionError("histograms use different binnings")
    diff = np.cumsum(h1.mass - h2.mass)
    return float(np.abs(diff).sum())


def _stacked_emd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise EMD between rows of two (count, bins) mass matrices."""
    ca = np.cumsum(a, axis=1)
    cb = np.cumsum(b, axis=1)
    return np.abs(ca[:, None, :] - cb[None, :, :]).sum(axis=2)


def mmd2(set_a, set_b, kernel_sigma: float) -> float:
    """Biased (V-statistic) squared MMD with kernel exp(-emd^2 / (2 sigma^2))."""
    if not set_a or not set_b:
        raise PreconditionError("mmd2 requires nonempty histogram sets")
    ref = set_a[0]
    for h in list(set_a) + list(set_b):
        if not h.same_binning(ref):
            raise PreconditionError("histograms use different binnings")
    a = np.stack([h.mass for h in set_a])
    b = np.stack([h.mass for h in set_b])
    gamma = 1.0 / (2.0 * kernel_sigma**2)
    k_aa = np.exp(-gamma * _stacked_emd(a, a) ** 2)
    k_bb = np.exp(-gamma * _stacked_emd(b, b) ** 2)
    k_ab = np.exp(-gamma * _stacked_emd(a, b) ** 2)
    value = k_aa.mean() + k_bb.mean() - 2.0 * k_ab.mean()
    if value < -1e-12:
        raise PreconditionError(f"MMD^2 fell below the numeric floor: {value}")
    return float(max(value, 0.0))


def eval_generic(generated, test) -> dict:
    """Degree/clustering/orbit MMD between equally sized graph sets."""
    if not generated or not test:
        raise PreconditionError("evaluation sets must be nonempty")
    if len(generated) != len(test):
        raise PreconditionError(
            f"set sizes differ: {len(generated)} generated vs {len(test)} test")
    max_n = max(g.n for g in list(generated) + list(test))
    deg_a = [degree_hist(g, num_bins=max_n) for g in generated]
    deg_b = [degree_hist(g, num_bins=max_n) for g in test]
    clus_a = [clustering_hist(g) for g in generated]
    clus_b = [clustering_hist(g) for g in test]
    orb_a = [orbit_hist(g) for g in generated]
    orb_b = [orbit_hist(g) for g in test]
    out = {
        "deg": mmd2(deg_a, deg_b, DEGREE_SIGMA),
        "clus": mmd2(clus_a, clus_b, CLUSTERING_SIGMA),
        "orb": mmd2(orb_a, orb_b, ORBIT_SIGMA),
    }
    out["avg"] = (out["deg"] + out["clus"] + out["orb"]) / 3.0
    return out


@dataclass(frozen=True)
class ValenceTable:
    """Max total bond order per node type; bond order per edge type."""

    max_valence: tuple
    bond_order: tuple

    def __post_init__(self):
        mv = tuple(int(v) for v in self.max_valence)
        bo = tuple(int(v) for v in self.bond_order)
        if any(v <= 0 for v in mv):
            raise PreconditionError("max valences must be positive")
        if len(bo) < 1 or bo[0] != 0 or any(v <= 0 for v in bo[1:]):
            raise PreconditionError(
                "bond orders must start with 0 (no edge) then positive orders")
        object.__setattr__(self, "max_valence", mv)
        object.__setattr__(self, "bond_order", bo)


def valence_validity(g: AttributedGraph, table: ValenceTable) -> bool:
    """Valid iff connected and every node's total bond order fits its type."""
    if g.dx > len(table.max_valence) or g.de > len(table.bond_order):
        raise PreconditionError("valence table does not cover the vocabulary")
    orders = np.asarray(table.bond_order)[g.edge_types]
    totals = orders.sum(axis=1)
    limits = np.asarray(table.max_valence)[g.node_types]
    return bool(np.all(totals <= limits)) and is_connected(g)


def validity_fraction(graphs, table: ValenceTable) -> float:
    if not graphs:
        raise PreconditionError("empty graph set")
    return sum(valence_validity(g, table) for g in graphs) / len(graphs)


def wl_hash(g: AttributedGraph, rounds: int = WL_ROUNDS) -> str:
    """Color-refinement hash over (node_type, edge_type) labels, 64-bit."""

    def digest(text: str) -> str:
        return blake2b(text.encode(), digest_size=8).hexdigest()

    n = g.n
    neighbors = [np.flatnonzero(g.edge_types[v]).tolist() for v in range(n)]
    labels = [digest(f"t{int(g.node_types[v])}") for v in range(n)]
    history = ["".join(sorted(labels))]
    for _ in range(rounds):
        new_labels = []
        for v in range(n):
            parts = sorted(f"{int(g.edge_types[v, u])}:{labels[u]}"
                           for u in neighbors[v])
            new_labels.append(digest(labels[v] + "|" + ";".join(parts)))
        labels = new_labels
        history.append("".join(sorted(labels)))
    return digest(f"n{n}#" + "#".join(history))


def uniqueness_novelty(generated, train) -> tuple:
    """Percent distinct hashes among generated; percent absent from train."""
    if not generated:
        raise PreconditionError("empty generated set")
    gen_hashes = [wl_hash(g) for g in generated]
    train_hashes = {wl_hash(g) for g in train}
    uniqueness = 100.0 * len(set(gen_hashes)) / len(gen_hashes)
    novelty = 100.0 * sum(h not in train_hashes for h in gen_hashes) / len(gen_hashes)
    return uniqueness, novelty
