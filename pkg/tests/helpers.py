"""Random instances shared by the unit and acceptance tests."""

import numpy as np

from csflock.graph import Digraph, GraphLibrary


def random_tree_edges(rng, N):
    """Edges (parent, child) of a random tree rooted at a random vertex."""
    order = rng.permutation(N)
    return [(int(order[rng.integers(0, k)]), int(order[k])) for k in range(1, N)]


def random_library(rng, N, K=None, p_edge=0.2):
    """K graphs with self-loops whose union contains a random spanning tree."""
    K = int(rng.integers(1, 4)) if K is None else K
    tree = random_tree_edges(rng, N)
    edge_sets = [set((v, v) for v in range(N)) for _ in range(K)]
    for e in tree:
        edge_sets[int(rng.integers(0, K))].add(e)
    for es in edge_sets:
        for j in range(N):
            for i in range(N):
                if i != j and rng.random() < p_edge:
                    es.add((j, i))
    probs = rng.dirichlet(np.ones(K)) * 0.9 + 0.1 / K
    probs /= probs.sum()
    return GraphLibrary(tuple(Digraph(N, frozenset(es)) for es in edge_sets), tuple(probs))


def spanning_tree_matrix(rng, N):
    """Nonnegative matrix with positive diagonal whose digraph has a spanning tree."""
    A = np.zeros((N, N))
    for j, i in random_tree_edges(rng, N):
        A[i, j] = rng.uniform(0.1, 1.0)
    A[rng.random((N, N)) < 0.15] += rng.uniform(0.0, 1.0)
    A[np.diag_indices(N)] = rng.uniform(0.1, 1.0, N)
    return A


def random_stochastic(rng, N, zero_frac=0.5):
    A = rng.random((N, N)) * (rng.random((N, N)) > zero_frac)
    A[np.arange(N), rng.integers(0, N, N)] += rng.random(N) + 1e-3
    return A / A.sum(axis=1, keepdims=True)
