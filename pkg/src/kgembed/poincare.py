"""Hyperbolic embeddings of hierarchical relations in the Poincaré ball."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .embeddings import HYPERBOLIC, EmbeddingTable
from .errors import EmptyEdgeSet, OutsideBall


@dataclass
class PoincareConfig:
    dimension: int = 50
    epochs: int = 50
    learning_rate: float = 0.1
    burn_in_epochs: int = 10
    burn_in_lr_divisor: float = 10.0
    negatives: int = 10
    l2_coefficient: float = 1e-5
    ball_epsilon: float = 1e-5
    seed: int = 0

    def validate(self) -> "PoincareConfig":
        if self.dimension < 1 or self.negatives < 1:
            raise ValueError("dimension and negatives must be positive")
        if self.epochs < 0 or self.burn_in_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.learning_rate <= 0 or self.burn_in_lr_divisor <= 0:
            raise ValueError("learning rates must be positive")
        if self.l2_coefficient < 0:
            raise ValueError("l2_coefficient must be non-negative")
        if not 0 < self.ball_epsilon < 1:
            raise ValueError("ball_epsilon must lie in (0, 1)")
        return self


def _check_ball(*arrays):
    for a in arrays:
        a = np.atleast_2d(a)
        if a.size and np.max(np.sum(a * a, axis=-1)) >= 1.0:
            raise OutsideBall("point lies on or outside the unit ball")


def poincare_distance(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_ball(u, v)
    return float(distances(u, v[None, :])[0])


def distances(u: np.ndarray, others: np.ndarray) -> np.ndarray:
    """Distances from ``u`` to each row of ``others`` (no ball check)."""
    uu = u @ u
    vv = np.sum(others * others, axis=1)
    diff = np.sum((others - u) ** 2, axis=1)
    gamma = 1.0 + 2.0 * diff / ((1.0 - uu) * (1.0 - vv))
    return np.arccosh(np.maximum(gamma, 1.0))


def distance_grads(u: np.ndarray, others: np.ndarray):
    """Distances plus their gradients w.r.t. ``u`` (k, d) and each row of ``others`` (k, d)."""
    uu = u @ u
    vv = np.sum(others * others, axis=1)
    uv = others @ u
    alpha = 1.0 - uu
    beta = 1.0 - vv
    diff = np.sum((others - u) ** 2, axis=1)
    gamma = np.maximum(1.0 + 2.0 * diff / (alpha * beta), 1.0)
    d = np.arccosh(gamma)
    # guard the removable singularity at u == v
    root = np.sqrt(np.maximum(gamma * gamma - 1.0, 1e-30))
    cu = 4.0 / (beta * alpha ** 2 * root)
    cv = 4.0 / (alpha * beta ** 2 * root)
    grad_u = cu[:, None] * ((vv - 2.0 * uv + 1.0)[:, None] * u[None, :] - alpha * others)
    grad_v = cv[:, None] * ((uu - 2.0 * uv + 1.0)[:, None] * others - beta[:, None] * u[None, :])
    return d, grad_u, grad_v


def _pair_terms(vectors, u, v, negs):
    """Softmax loss of one positive pair and its gradients.

    The candidate set is the positive ``v`` followed by the sampled negatives.
    """
    cand = np.concatenate(([v], np.asarray(negs, dtype=np.int64)))
    d, gu, gv = distance_grads(vectors[u], vectors[cand])
    logits = -d
    m = logits.max()
    lse = m + np.log(np.sum(np.exp(logits - m)))
    loss = d[0] + lse
    weight = -np.exp(logits - lse)
    weight[0] += 1.0
    return loss, cand, weight @ gu, weight[:, None] * gv


def poincare_loss(vectors, positives, negatives, l2_coefficient: float = 0.0) -> float:
    """Negative log softmax over distances, summed over positive pairs, plus L2.

    ``negatives[i]`` holds the sampled negative ids for ``positives[i]``.
    """
    return poincare_loss_and_grad(vectors, positives, negatives, l2_coefficient)[0]


def poincare_loss_and_grad(vectors, positives, negatives, l2_coefficient: float = 0.0):
    vectors = np.asarray(vectors, dtype=np.float64)
    _check_ball(vectors)
    grad = 2.0 * l2_coefficient * vectors
    loss = l2_coefficient * float(np.sum(vectors * vectors))
    for (u, v), negs in zip(positives, negatives):
        pl, cand, g_u, g_c = _pair_terms(vectors, u, v, negs)
        loss += pl
        grad[u] += g_u
        np.add.at(grad, cand, g_c)
    return loss, grad


def project(x: np.ndarray, ball_epsilon: float = 1e-5) -> np.ndarray:
    """Radially pull rows with norm >= 1 - eps back to norm 1 - eps."""
    x = np.array(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    limit = 1.0 - ball_epsilon
    scale = np.where(norms >= limit, limit / np.maximum(norms, 1e-300), 1.0)
    return x * scale


def riemannian_update(theta_row, euclidean_grad, lr: float, ball_epsilon: float = 1e-5) -> np.ndarray:
    theta_row = np.asarray(theta_row, dtype=np.float64)
    sq = np.sum(theta_row * theta_row, axis=-1, keepdims=True)
    scale = (1.0 - sq) ** 2 / 4.0
    return project(theta_row - lr * scale * np.asarray(euclidean_grad), ball_epsilon)


class NegativeSampler:
    """Uniform negatives for ``u`` drawn from nodes unrelated to it."""

    def __init__(self, num_nodes: int, pairs: np.ndarray):
        self.num_nodes = num_nodes
        self.related = [set() for _ in range(num_nodes)]
        for a, b in pairs:
            self.related[a].add(int(b))
            self.related[b].add(int(a))

    def sample(self, u: int, k: int, rng) -> np.ndarray:
        banned = self.related[u]
        if len(banned) + 1 >= self.num_nodes:
            return np.zeros(0, dtype=np.int64)
        out = []
        while len(out) < k:
            for c in rng.integers(self.num_nodes, size=2 * k):
                c = int(c)
                if c != u and c not in banned:
                    out.append(c)
                    if len(out) == k:
                        break
        return np.array(out, dtype=np.int64)


def poincare_train(hierarchical_edges, num_nodes: int, config: PoincareConfig,
                   id_to_cui: Sequence[str] | None = None) -> EmbeddingTable:
    """Riemannian SGD on the softmax distance loss, one positive pair at a time.

    Each undirected edge contributes both orientations per epoch. The first
    ``burn_in_epochs`` run at ``learning_rate / burn_in_lr_divisor`` and count
    toward ``epochs``.
    """
    config.validate()
    edges = np.asarray(list(hierarchical_edges), dtype=np.int64).reshape(-1, 2)
    edges = edges[edges[:, 0] != edges[:, 1]]
    if edges.shape[0] == 0:
        raise EmptyEdgeSet("no hierarchical edges to train on")
    if edges.max() >= num_nodes or edges.min() < 0:
        raise ValueError("edge endpoint outside [0, num_nodes)")
    if id_to_cui is None:
        id_to_cui = [str(i) for i in range(num_nodes)]

    rng = np.random.default_rng(config.seed)
    d = config.dimension
    theta = rng.uniform(-0.001, 0.001, size=(num_nodes, d))
    undirected = np.unique(np.sort(edges, axis=1), axis=0)
    pairs = np.concatenate([undirected, undirected[:, ::-1]])
    sampler = NegativeSampler(num_nodes, undirected)
    eps = config.ball_epsilon
    l2 = config.l2_coefficient

    history, max_norms = [], []
    for epoch in range(config.epochs):
        lr = config.learning_rate
        if epoch < config.burn_in_epochs:
            lr /= config.burn_in_lr_divisor
        total = 0.0
        for idx in rng.permutation(pairs.shape[0]):
            u, v = int(pairs[idx, 0]), int(pairs[idx, 1])
            negs = sampler.sample(u, config.negatives, rng)
            loss, cand, g_u, g_c = _pair_terms(theta, u, v, negs)
            total += loss
            rows = np.concatenate(([u], cand))
            grads = np.vstack([g_u[None, :], g_c])
            uniq, inv = np.unique(rows, return_inverse=True)
            summed = np.zeros((uniq.size, d))
            np.add.at(summed, inv, grads)
            summed += 2.0 * l2 * theta[uniq]
            theta[uniq] = riemannian_update(theta[uniq], summed, lr, eps)
        history.append(total / pairs.shape[0])
        max_norms.append(float(np.max(np.linalg.norm(theta, axis=1))))

    meta = {"method": "poincare", "config": asdict(config), "ball_epsilon": eps,
            "loss_history": history, "max_norm_history": max_norms}
    table = EmbeddingTable(theta, HYPERBOLIC, id_to_cui, meta)
    table.check()
    return table


def mean_parent_rank(vectors: np.ndarray, child_parent: Sequence[tuple[int, int]], filtered: bool = True) -> float:
    """Mean 1-based rank of each true parent by distance from its child.

    With ``filtered`` the child's other related nodes (its own children and
    further parents) are removed from the candidate list, as in the usual
    graph-reconstruction protocol; otherwise every other node competes.
    """
    vectors = np.asarray(vectors)
    related: dict[int, set] = {}
    for c, p in child_parent:
        related.setdefault(int(c), set()).add(int(p))
        related.setdefault(int(p), set()).add(int(c))
    ranks = []
    for child, parent in child_parent:
        dist = distances(vectors[child], vectors)
        dist[child] = np.inf
        if filtered:
            others = [o for o in related[int(child)] if o != parent]
            dist[others] = np.inf
        ranks.append(1 + int(np.sum(dist < dist[parent])))
    return float(np.mean(ranks))
