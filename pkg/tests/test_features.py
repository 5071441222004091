"""Feature augmentation: cycle counts vs exhaustive enumeration, spectra,
permutation invariance of the global features, batching masks."""

from itertools import combinations

import numpy as np
import pytest

from graphbridge.features import (FeatureSpec, augment, batch_graphs,
                                  count_cycles,
                                  normalized_laplacian_eigenvalues)
from graphbridge.graphs import AttributedGraph, permute


def cycle_graph(n):
    e = np.zeros((n, n), dtype=int)
    for i in range(n):
        e[i, (i + 1) % n] = e[(i + 1) % n, i] = 1
    return AttributedGraph(np.zeros(n, dtype=int), e, dx=1, de=2)


def random_graph(rng, n, p=0.5):
    upper = np.triu((rng.random((n, n)) < p).astype(int), k=1)
    e = upper + upper.T
    return AttributedGraph(np.zeros(n, dtype=int), e, dx=1, de=2)


def brute_force_cycles(g, length):
    """Count simple cycles of a given length by enumerating vertex subsets."""
    adj = g.edge_types != 0
    count = 0
    for subset in combinations(range(g.n), length):
        # count Hamiltonian cycles of the induced subgraph
        nodes = list(subset)
        first = nodes[0]
        rest = nodes[1:]
        from itertools import permutations
        seen = set()
        for order in permutations(rest):
            cyc = (first,) + order
            if all(adj[cyc[i], cyc[(i + 1) % length]] for i in range(length)):
                rotations = [cyc[i:] + cyc[:i] for i in range(length)]
                back = tuple(reversed(cyc))
                rotations += [back[i:] + back[:i] for i in range(length)]
                seen.add(min(rotations))
        count += len(seen)
    return count


def test_triangle_counts():
    g = cycle_graph(3)
    assert np.array_equal(count_cycles(g), [1.0, 0.0, 0.0])


def test_square_counts():
    g = cycle_graph(4)
    assert np.array_equal(count_cycles(g), [0.0, 1.0, 0.0])


def test_pentagon_counts():
    g = cycle_graph(5)
    assert np.array_equal(count_cycles(g), [0.0, 0.0, 1.0])


def test_cycle_counts_match_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(15):
        g = random_graph(rng, int(rng.integers(4, 8)))
        got = count_cycles(g)
        expected = [brute_force_cycles(g, L) for L in (3, 4, 5)]
        assert np.allclose(got, expected), (got, expected)


def test_edgeless_graph_features():
    g = AttributedGraph(np.zeros(5, dtype=int), np.zeros((5, 5), dtype=int))
    spec = FeatureSpec(dx=1, de=2, degree_onehot=True)
    ag = augment(g, spec)
    assert np.allclose(ag.y_feat[:spec.k_eig], 0.0)       # empty spectrum
    assert np.allclose(ag.y_feat[spec.k_eig:spec.k_eig + 3], 0.0)  # no cycles
    assert ag.y_feat[-1] == 5.0


def test_eigenvalues_bounded_and_padded():
    g = cycle_graph(4)
    eigs = normalized_laplacian_eigenvalues(g, 6)
    assert eigs.shape == (6,)
    assert np.all(eigs >= -1e-12) and np.all(eigs <= 2.0 + 1e-12)
    assert np.allclose(eigs[3:], 0.0)  # only n - 1 = 3 nontrivial values


def test_y_feat_permutation_invariant():
    rng = np.random.default_rng(1)
    spec = FeatureSpec(dx=1, de=2, degree_onehot=True)
    for _ in range(10):
        g = random_graph(rng, 8)
        h = permute(g, rng.permutation(8))
        ya = augment(g, spec).y_feat
        yb = augment(h, spec).y_feat
        assert np.max(np.abs(ya - yb)) < 1e-8


def test_x_feat_onehot_and_degree_channels():
    g = cycle_graph(4)
    spec = FeatureSpec(dx=1, de=2, degree_onehot=True, degree_clamp=10)
    ag = augment(g, spec)
    assert ag.x_feat.shape == (4, 1 + 11)
    assert np.allclose(ag.x_feat[:, 0], 1.0)          # single node type
    assert np.allclose(ag.x_feat[:, 1 + 2], 1.0)      # every degree is 2
    assert np.allclose(ag.x_feat.sum(axis=-1), 2.0)


def test_degree_clamping():
    g = AttributedGraph(np.zeros(8, dtype=int),
                        (1 - np.eye(8, dtype=int)), dx=1, de=2)  # K8, degree 7
    spec = FeatureSpec(dx=1, de=2, degree_onehot=True, degree_clamp=3)
    ag = augment(g, spec)
    assert np.allclose(ag.x_feat[:, 1 + 3], 1.0)      # clamped at 3


def test_e_feat_rows_sum_to_one():
    rng = np.random.default_rng(2)
    g = random_graph(rng, 6)
    ag = augment(g, FeatureSpec(dx=1, de=2))
    assert np.allclose(ag.e_feat.sum(axis=-1), 1.0)
    assert np.allclose(ag.x_feat.sum(axis=-1), 1.0)


def test_batch_padding_masks():
    rng = np.random.default_rng(3)
    spec = FeatureSpec(dx=1, de=2, degree_onehot=True)
    gs = [random_graph(rng, n) for n in (4, 6, 5)]
    batch = batch_graphs([augment(g, spec) for g in gs])
    assert batch.max_n == 6
    assert batch.mask.sum() == 15
    assert np.allclose(batch.x[0, 4:], 0.0)
    assert np.allclose(batch.e[0, 4:], 0.0)
    assert np.allclose(batch.e[0, :, 4:], 0.0)
    pm = batch.pair_mask()
    assert pm[0, 1, 1] == 0.0                         # diagonal masked
    assert pm.sum() == sum(n * (n - 1) for n in (4, 6, 5))
