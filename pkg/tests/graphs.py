"""Synthetic graphs shared by the tests."""
import numpy as np

from kgembed.graph import graph_from_edges


def two_cliques(size=20):
    """Two ``size``-cliques joined by one bridge; groups mark the cluster."""
    edges = []
    for base in (0, size):
        edges += [(base + i, base + j) for i in range(size) for j in range(i + 1, size)]
    edges.append((size - 1, size))
    groups = ["DISO"] * size + ["CHEM"] * size
    return graph_from_edges(edges, groups=groups)


def taxonomy(n_mids=3, leaves_per_mid=12):
    """Root, mids, leaves; returns (child, parent) edges and node count."""
    edges = []
    nxt = 1 + n_mids
    for m in range(1, 1 + n_mids):
        edges.append((m, 0))
        for _ in range(leaves_per_mid):
            edges.append((nxt, m))
            nxt += 1
    return edges, nxt


def binary_tree(depth):
    n = 2 ** (depth + 1) - 1
    return [(c, (c - 1) // 2) for c in range(1, n)], n


def cubic_graph():
    """The 3-regular Petersen graph."""
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return graph_from_edges(outer + spokes + inner)


def random_ball_points(rng, n, d, max_norm=0.95):
    x = rng.normal(size=(n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * (max_norm * rng.random((n, 1)) ** (1.0 / d))
