"""Feature augmentation: one-hot encodings plus spectral and cycle features.

Message-passing style encoders cannot count cycles on their own, so the
global feature vector carries the leading normalized-Laplacian eigenvalues
and closed-walk cycle counts alongside the node count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, PreconditionError
from .graphs import AttributedGraph, GraphBatch


@dataclass(frozen=True)
class FeatureSpec:
    dx: int = 1
    de: int = 2
    k_eig: int = 5
    cycle_lengths: tuple[int, ...] = (3, 4, 5)
    degree_onehot: bool = False
    degree_clamp: int = 10

    @property
    def x_dim(self) -> int:
        return self.dx + (self.degree_clamp + 1 if self.degree_onehot else 0)

    @property
    def y_dim(self) -> int:
        return self.k_eig + len(self.cycle_lengths) + 1


@dataclass
class AugmentedGraph:
    base: AttributedGraph
    x_feat: np.ndarray  # (n, x_dim)
    e_feat: np.ndarray  # (n, n, de)
    y_feat: np.ndarray  # (y_dim,)


def one_hot(labels, depth):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros(labels.shape + (depth,), dtype=np.float64)
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


def normalized_laplacian_eigenvalues(g: AttributedGraph, k: int) -> np.ndarray:
    """k smallest nontrivial eigenvalues of D^-1/2 (D - A) D^-1/2, zero padded.

    Isolated nodes get zero rows (d^-1/2 := 0 for d = 0), so an edgeless
    graph has an all-zero spectrum.
    """
    adj = g.adjacency()
    deg = adj.sum(axis=1)
    with np.errstate(divide="ignore"):
        dinv = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-12)), 0.0)
    lap = np.diag(deg) - adj
    sym = dinv[:, None] * lap * dinv[None, :]
    try:
        eigs = np.linalg.eigvalsh(sym)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigen-solver failed on graph with n={g.n}: {exc}")
    nontrivial = np.sort(eigs)[1:]  # drop the trivial zero mode
    out = np.zeros(k, dtype=np.float64)
    take = min(k, nontrivial.shape[0])
    out[:take] = nontrivial[:take]
    return out


def count_cycles(g: AttributedGraph, lengths=(3, 4, 5)) -> np.ndarray:
    """Cycle counts from closed-walk trace identities (lengths 3 to 5)."""
    adj = g.adjacency()
    deg = adj.sum(axis=1)
    a2 = adj @ adj
    a3 = a2 @ adj
    m = adj.sum() / 2.0
    counts = {}
    counts[3] = np.trace(a3) / 6.0
    a4 = a3 @ adj
    counts[4] = (np.trace(a4) - 2.0 * (deg * deg).sum() + 2.0 * m) / 8.0
    a5 = a4 @ adj
    counts[5] = (np.trace(a5) - 5.0 * np.trace(a3)
                 - 5.0 * ((deg - 2.0) * np.diag(a3)).sum()) / 10.0
    unsupported = [L for L in lengths if L not in counts]
    if unsupported:
        raise PreconditionError(f"unsupported cycle lengths {unsupported}")
    return np.array([counts[L] for L in lengths], dtype=np.float64)


def augment(g: AttributedGraph, spec: FeatureSpec) -> AugmentedGraph:
    """Build one-hot node/edge features and the global feature vector."""
    if g.dx > spec.dx or g.de > spec.de:
        raise PreconditionError(
            f"graph vocab ({g.dx}, {g.de}) exceeds feature spec "
            f"({spec.dx}, {spec.de})")
    x = one_hot(g.node_types, spec.dx)
    if spec.degree_onehot:
        deg = np.minimum(g.degrees(), spec.degree_clamp)
        x = np.concatenate([x, one_hot(deg, spec.degree_clamp + 1)], axis=-1)
    e = one_hot(g.edge_types, spec.de)
    y = np.concatenate([
        normalized_laplacian_eigenvalues(g, spec.k_eig),
        count_cycles(g, spec.cycle_lengths),
        [float(g.n)],
    ])
    if not np.all(np.isfinite(y)):
        raise NumericError("non-finite global features")
    return AugmentedGraph(base=g, x_feat=x, e_feat=e, y_feat=y)


def batch_graphs(augmented: list[AugmentedGraph], max_n: int | None = None) -> GraphBatch:
    """Pad a list of augmented graphs into one batch; padding is all-zero."""
    if not augmented:
        raise PreconditionError("cannot batch an empty graph list")
    ns = [ag.base.n for ag in augmented]
    pad_n = max(ns) if max_n is None else max_n
    if pad_n < max(ns):
        raise PreconditionError(f"max_n={pad_n} smaller than largest graph {max(ns)}")
    b = len(augmented)
    x_dim = augmented[0].x_feat.shape[-1]
    e_dim = augmented[0].e_feat.shape[-1]
    y_dim = augmented[0].y_feat.shape[-1]
    x = np.zeros((b, pad_n, x_dim))
    e = np.zeros((b, pad_n, pad_n, e_dim))
    y = np.zeros((b, y_dim))
    mask = np.zeros((b, pad_n), dtype=bool)
    for i, ag in enumerate(augmented):
        n = ag.base.n
        x[i, :n] = ag.x_feat
        e[i, :n, :n] = ag.e_feat
        y[i] = ag.y_feat
        mask[i, :n] = True
    return GraphBatch(x=x, e=e, y=y, mask=mask, n=np.asarray(ns, dtype=np.int64))
