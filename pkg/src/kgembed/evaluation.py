"""Graph-quality and concept-similarity evaluations of embedding tables."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingTable, cosine_similarity
from .errors import EmptyCategory, MissingEmbedding, NegativeExhaustion
from .graph import ConceptGraph
from .poincare import distances


def _rows(embeddings: EmbeddingTable, cuis) -> np.ndarray:
    idx = []
    for c in cuis:
        if c not in embeddings:
            raise MissingEmbedding(c)
        idx.append(embeddings.index_of(c))
    return embeddings.vectors[idx]


def split_indices(n: int, train_fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(round(train_fraction * n))
    cut = min(max(cut, 1), n - 1)
    return np.sort(perm[:cut]), np.sort(perm[cut:])


# ---------------------------------------------------------------- node classification

@dataclass
class ClassificationDataset:
    items: list[tuple[str, str]]

    @classmethod
    def from_graph(cls, graph: ConceptGraph, label: str = "semantic_type") -> "ClassificationDataset":
        return cls([(nd.cui, getattr(nd, label)) for nd in graph.nodes])

    def split(self, train_fraction: float = 0.8, seed=0):
        return split_indices(len(self.items), train_fraction, seed)


class SoftmaxRegression:
    """Multinomial logistic regression fitted by Nesterov-accelerated gradient descent.

    Inputs are divided by their root-mean-square row norm, which keeps the fit
    invariant to rotations of the embedding space.
    """

    def __init__(self, l2: float = 1e-4, iterations: int = 500):
        self.l2 = l2
        self.iterations = iterations

    def fit(self, x: np.ndarray, labels: Sequence) -> "SoftmaxRegression":
        self.classes_, y = np.unique(np.asarray(labels), return_inverse=True)
        n, d = x.shape
        k = self.classes_.size
        self.scale_ = float(np.sqrt(np.mean(np.sum(x * x, axis=1)))) or 1.0
        xs = np.hstack([x / self.scale_, np.ones((n, 1))])
        onehot = np.zeros((n, k))
        onehot[np.arange(n), y] = 1.0
        lip = 0.5 * np.linalg.norm(xs, 2) ** 2 / n + self.l2
        step = 1.0 / lip
        w = np.zeros((d + 1, k))
        z = w.copy()
        t = 1.0
        reg_mask = np.ones((d + 1, 1))
        reg_mask[-1] = 0.0
        for _ in range(self.iterations):
            logits = xs @ z
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            grad = xs.T @ (p - onehot) / n + self.l2 * reg_mask * z
            w_next = z - step * grad
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            z = w_next + ((t - 1.0) / t_next) * (w_next - w)
            w, t = w_next, t_next
        self.coef_ = w
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        xs = np.hstack([x / self.scale_, np.ones((x.shape[0], 1))])
        return self.classes_[np.argmax(xs @ self.coef_, axis=1)]


def classify_nodes(embeddings: EmbeddingTable, dataset: ClassificationDataset,
                   train_fraction: float = 0.8, seed=0) -> float:
    cuis = [c for c, _ in dataset.items]
    labels = np.array([lab for _, lab in dataset.items], dtype=object)
    x = _rows(embeddings, cuis)
    train, test = dataset.split(train_fraction, seed)
    model = SoftmaxRegression().fit(x[train], labels[train])
    return float(np.mean(model.predict(x[test]) == labels[test]))


# ---------------------------------------------------------------- link prediction

@dataclass
class LinkDataset:
    positives: list[tuple[str, str]]
    negatives: list[tuple[str, str]]

    def features(self, embeddings: EmbeddingTable) -> tuple[np.ndarray, np.ndarray]:
        """Cosine similarity per pair and the 1/0 label, positives first."""
        pairs = self.positives + self.negatives
        a = _rows(embeddings, [p[0] for p in pairs])
        b = _rows(embeddings, [p[1] for p in pairs])
        y = np.concatenate([np.ones(len(self.positives)), np.zeros(len(self.negatives))])
        return cosine_similarity(a, b), y


def build_link_dataset(graph: ConceptGraph, sample_fraction: float, seed=0) -> LinkDataset:
    """Uniform sample of relations plus the same number of sampled non-edges.

    Negatives are distinct unordered pairs with no relation in either
    direction, found by rejection sampling with at most 100 attempts per
    requested pair.
    """
    rels = graph.relations
    if not rels:
        raise ValueError("graph has no relations")
    if not 0.0 < sample_fraction <= 1.0:
        raise ValueError("sample_fraction must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    k = max(1, int(round(sample_fraction * len(rels))))
    chosen = np.sort(rng.choice(len(rels), size=k, replace=False))
    positives = [(graph.nodes[rels[i].head].cui, graph.nodes[rels[i].tail].cui) for i in chosen]

    n = graph.num_nodes
    available = n * (n - 1) // 2 - graph.num_edges
    if available < k:
        raise NegativeExhaustion(k, available)
    picked: set[tuple[int, int]] = set()
    negatives = []
    attempts = 0
    limit = 100 * k
    while len(negatives) < k:
        if attempts >= limit:
            raise NegativeExhaustion(k, len(negatives))
        attempts += 1
        u, v = (int(x) for x in rng.integers(n, size=2))
        key = (min(u, v), max(u, v))
        if u == v or key in picked or graph.has_edge(u, v):
            continue
        picked.add(key)
        negatives.append((graph.nodes[u].cui, graph.nodes[v].cui))
    return LinkDataset(positives, negatives)


class LinearHingeClassifier:
    """Linear SVM on a single feature, fitted by averaged subgradient descent."""

    def __init__(self, l2: float = 1e-3, iterations: int = 2000):
        self.l2 = l2
        self.iterations = iterations

    def fit(self, x: np.ndarray, y01: np.ndarray) -> "LinearHingeClassifier":
        x = np.asarray(x, dtype=np.float64)
        y = 2.0 * np.asarray(y01) - 1.0
        self.mean_ = float(x.mean())
        sd = float(x.std())
        self.sd_ = sd if sd > 1e-12 else 1.0
        xs = (x - self.mean_) / self.sd_
        w = b = 0.0
        w_avg = b_avg = 0.0
        for t in range(1, self.iterations + 1):
            margin = y * (w * xs + b)
            active = margin < 1.0
            gw = -np.sum(y[active] * xs[active]) / xs.size + self.l2 * w
            gb = -np.sum(y[active]) / xs.size
            lr = 1.0 / np.sqrt(t)
            w -= lr * gw
            b -= lr * gb
            w_avg += (w - w_avg) / t
            b_avg += (b - b_avg) / t
        self.weight_ = w_avg / self.sd_
        self.bias_ = b_avg - w_avg * self.mean_ / self.sd_
        return self

    @property
    def threshold(self) -> float:
        return -self.bias_ / self.weight_ if self.weight_ != 0 else float("nan")

    def decision_function(self, x):
        return self.weight_ * np.asarray(x) + self.bias_

    def predict(self, x) -> np.ndarray:
        return (self.decision_function(x) > 0).astype(np.float64)


def link_prediction_report(embeddings: EmbeddingTable, link_dataset: LinkDataset,
                           train_fraction: float = 0.8, seed=0) -> dict:
    x, y = link_dataset.features(embeddings)
    train, test = split_indices(y.size, train_fraction, seed)
    clf = LinearHingeClassifier().fit(x[train], y[train])
    acc = float(np.mean(clf.predict(x[test]) == y[test]))
    return {"accuracy": acc, "threshold": clf.threshold, "weight": clf.weight_,
            "bias": clf.bias_, "n_train": int(train.size), "n_test": int(test.size)}


def predict_links(embeddings: EmbeddingTable, link_dataset: LinkDataset,
                  train_fraction: float = 0.8, seed=0) -> float:
    return link_prediction_report(embeddings, link_dataset, train_fraction, seed)["accuracy"]


# ---------------------------------------------------------------- concept similarity

BENCHMARK_NAMES = ("D1", "D2", "D3", "D4", "D5")


@dataclass
class BenchmarkPairSet:
    name: str
    pairs: list[tuple[str, str]]
    category_of: dict[str, str]

    def members(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for cui, cat in self.category_of.items():
            out.setdefault(cat, []).append(cui)
        return out


@dataclass
class PowerReport:
    dataset: str
    power: float
    null_quantiles: dict[str, float]
    bootstrap_count: int
    alpha: float
    threshold: float
    similarity: str = "cosine"
    true_similarities: np.ndarray = field(default=None, repr=False)
    null_similarities: np.ndarray = field(default=None, repr=False)

    def summary(self) -> dict:
        return {"dataset": self.dataset, "power": self.power, "alpha": self.alpha,
                "bootstrap_count": self.bootstrap_count, "threshold": self.threshold,
                "similarity": self.similarity, "n_pairs": int(len(self.true_similarities)),
                "null_quantiles": self.null_quantiles}


def _similarity(embeddings, a: np.ndarray, b: np.ndarray, kind: str) -> np.ndarray:
    if kind == "cosine":
        return cosine_similarity(a, b)
    if kind == "poincare":
        return np.array([-distances(x, y[None, :])[0] for x, y in zip(a, b)])
    raise ValueError(f"unknown similarity {kind!r}")


def pair_similarities(embeddings: EmbeddingTable, pairs, kind: str = "cosine") -> np.ndarray:
    if not len(pairs):
        return np.zeros(0)
    return _similarity(embeddings, _rows(embeddings, [p[0] for p in pairs]),
                       _rows(embeddings, [p[1] for p in pairs]), kind)


def bootstrap_power(embeddings: EmbeddingTable, pair_set: BenchmarkPairSet, bootstrap_count: int = 10000,
                    alpha: float = 0.05, seed=0, similarity: str = "cosine") -> PowerReport:
    """Fraction of true pairs whose similarity beats the (1 - alpha) null quantile.

    Each null draw picks a true pair uniformly, then replaces both ends by
    uniform members of their categories.
    """
    if not pair_set.pairs:
        raise ValueError(f"{pair_set.name} has no pairs")
    members = pair_set.members()
    cat_names = sorted(members)
    cat_id = {c: i for i, c in enumerate(cat_names)}
    pools = [np.array([embeddings.index_of(c) if c in embeddings else -1 for c in members[c]])
             for c in cat_names]
    for name, pool in zip(cat_names, pools):
        if np.any(pool < 0):
            raise MissingEmbedding(members[name][int(np.argmax(pool < 0))])

    def category(cui):
        try:
            return cat_id[pair_set.category_of[cui]]
        except KeyError:
            raise EmptyCategory(f"{cui!r} has no category with members") from None

    cx = np.array([category(x) for x, _ in pair_set.pairs])
    cy = np.array([category(y) for _, y in pair_set.pairs])

    rng = np.random.default_rng(seed)
    which = rng.integers(len(pair_set.pairs), size=bootstrap_count)
    u = rng.random(bootstrap_count)
    v = rng.random(bootstrap_count)
    xs = np.empty(bootstrap_count, dtype=np.int64)
    ys = np.empty(bootstrap_count, dtype=np.int64)
    for side, cats, unif in ((xs, cx, u), (ys, cy, v)):
        drawn = cats[which]
        for c in np.unique(drawn):
            sel = drawn == c
            pool = pools[c]
            side[sel] = pool[np.minimum((unif[sel] * pool.size).astype(np.int64), pool.size - 1)]

    vec = embeddings.vectors
    null = _similarity(embeddings, vec[xs], vec[ys], similarity)
    true = pair_similarities(embeddings, pair_set.pairs, similarity)
    threshold = float(np.quantile(null, 1.0 - alpha))
    power = float(np.mean(true > threshold))
    qs = {f"{q:.2f}": float(np.quantile(null, q)) for q in (0.05, 0.25, 0.5, 0.75, 0.95)}
    return PowerReport(pair_set.name, power, qs, bootstrap_count, alpha, threshold, similarity, true, null)


def build_benchmark_sets(graph: ConceptGraph, category: str = "semantic_type") -> dict[str, BenchmarkPairSet]:
    """Split relations into D1..D5 by semantic group and hierarchy flag.

    Pairs are unordered and deduplicated within each set. A same-group pair
    joined by both an ``isa`` and a non-hierarchical relation counts as
    hierarchical only, so D1/D3 and D2/D4 stay disjoint.
    """
    hier: dict[tuple[int, int], bool] = {}
    for r in graph.relations:
        key = (min(r.head, r.tail), max(r.head, r.tail))
        hier[key] = hier.get(key, False) or r.is_hierarchical
    buckets: dict[str, list[tuple[int, int]]] = {n: [] for n in BENCHMARK_NAMES}
    g = graph.groups
    for (a, b), is_h in sorted(hier.items()):
        ga, gb = g[a], g[b]
        if ga == gb == "DISO":
            buckets["D1" if is_h else "D3"].append((a, b))
        elif ga == gb == "CHEM":
            buckets["D2" if is_h else "D4"].append((a, b))
        elif {ga, gb} == {"DISO", "CHEM"}:
            # orient as (DISO, CHEM)
            buckets["D5"].append((a, b) if ga == "DISO" else (b, a))
    category_of = {nd.cui: getattr(nd, category) for nd in graph.nodes}
    nodes = graph.nodes
    return {name: BenchmarkPairSet(name, [(nodes[a].cui, nodes[b].cui) for a, b in pairs], category_of)
            for name, pairs in buckets.items()}
