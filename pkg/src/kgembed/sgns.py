"""Skip-gram with negative sampling over walk corpora."""
from __future__ import annotations

import threading
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numba
import numpy as np

from .embeddings import EUCLIDEAN, EmbeddingTable
from .errors import EmptyCorpus
from .graph import AliasTable
from .walks import WalkCorpus


@dataclass
class SgnsConfig:
    dimension: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    unigram_power: float = 0.75
    seed: int = 0
    workers: int = 1

    def validate(self) -> "SgnsConfig":
        for name in ("dimension", "window", "negatives", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")
        if not 0.0 <= self.unigram_power <= 1.0:
            raise ValueError("unigram_power must lie in [0, 1]")
        return self


class NoiseDistribution:
    """Negative-sampling distribution proportional to count ** power."""

    def __init__(self, counts, power: float = 0.75):
        if isinstance(counts, Mapping):
            ids = np.array(sorted(counts), dtype=np.int64)
            c = np.array([counts[i] for i in ids], dtype=np.float64)
        else:
            c = np.asarray(counts, dtype=np.float64)
            ids = np.arange(c.size)
        keep = c > 0
        if not keep.any():
            raise EmptyCorpus("noise distribution needs at least one positive count")
        self.ids = ids[keep]
        self.table = AliasTable(c[keep] ** power)

    def draw(self, rng, size=None):
        if size is None:
            return int(self.ids[self.table.sample(rng)])
        return self.ids[self.table.sample(rng, size)]

    def probabilities(self) -> dict[int, float]:
        return dict(zip(self.ids.tolist(), self.table.distribution().tolist()))


def draw_negative(vocabulary_counts, unigram_power: float, rng) -> int:
    return NoiseDistribution(vocabulary_counts, unigram_power).draw(rng)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def pair_loss_and_grad(center: np.ndarray, contexts: np.ndarray, labels: np.ndarray):
    """Loss and gradients for one centre vector against positive/negative contexts.

    ``contexts`` rows are context vectors; ``labels`` is 1 for the positive row
    and 0 for negatives. The loss is ``-sum(log sigmoid(+-u.v))``.
    """
    scores = contexts @ center
    sign = 2.0 * labels - 1.0
    loss = -np.sum(_log_sigmoid(sign * scores))
    coef = _sigmoid(scores) - labels
    return loss, coef @ contexts, np.outer(coef, center)


def training_pairs(walks: Sequence[Sequence[int]], window: int) -> tuple[np.ndarray, np.ndarray]:
    """All (center, context) pairs within ``window`` positions, ordered by center position."""
    lengths = np.array([len(w) for w in walks], dtype=np.int64)
    if lengths.sum() == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    tokens = np.concatenate([np.asarray(w, dtype=np.int64) for w in walks if len(w)])
    walk_id = np.repeat(np.arange(len(walks)), lengths)
    pos = np.arange(tokens.size)
    centers, contexts, order_key, off_key = [], [], [], []
    for off in range(-window, window + 1):
        if off == 0:
            continue
        j = pos + off
        ok = (j >= 0) & (j < tokens.size)
        ok[ok] &= walk_id[j[ok]] == walk_id[ok]
        i = pos[ok]
        centers.append(tokens[i])
        contexts.append(tokens[j[ok]])
        order_key.append(i)
        off_key.append(np.full(i.size, off))
    centers = np.concatenate(centers)
    contexts = np.concatenate(contexts)
    order = np.lexsort((np.concatenate(off_key), np.concatenate(order_key)))
    return centers[order], contexts[order]


def _run_shard_numpy(w_in, w_out, centers, contexts, negs, lr_start, lr_step, lr_floor):
    """Reference implementation of :func:`_sgd_kernel` built on :func:`pair_loss_and_grad`."""
    k = negs.shape[1]
    labels = np.zeros(k + 1)
    labels[0] = 1.0
    total = 0.0
    lr = lr_start
    for c, o, neg in zip(centers, contexts, negs):
        keep = neg[neg != o]
        ids = np.concatenate(([o], keep))
        loss, g_center, g_ctx = pair_loss_and_grad(w_in[c], w_out[ids], labels[:ids.size])
        total += loss
        np.add.at(w_out, ids, -lr * g_ctx)
        w_in[c] -= lr * g_center
        lr = max(lr - lr_step, lr_floor)
    return total


@numba.njit(cache=True, nogil=True)
def _sgd_kernel(w_in, w_out, centers, contexts, negs, lr_start, lr_step, lr_floor):
    d = w_in.shape[1]
    k = negs.shape[1]
    ids = np.empty(k + 1, dtype=np.int64)
    coef = np.empty(k + 1)
    grad_u = np.empty(d)
    total = 0.0
    lr = lr_start
    for p in range(centers.shape[0]):
        c = centers[p]
        o = contexts[p]
        n = 1
        ids[0] = o
        for j in range(k):
            if negs[p, j] != o:
                ids[n] = negs[p, j]
                n += 1
        for j in range(n):
            s = 0.0
            for t in range(d):
                s += w_in[c, t] * w_out[ids[j], t]
            label = 1.0 if j == 0 else 0.0
            x = s if j == 0 else -s
            total += max(0.0, -x) + np.log1p(np.exp(-abs(x)))
            coef[j] = 0.5 * (1.0 + np.tanh(0.5 * s)) - label
        for t in range(d):
            acc = 0.0
            for j in range(n):
                acc += coef[j] * w_out[ids[j], t]
            grad_u[t] = acc
        for j in range(n):
            for t in range(d):
                w_out[ids[j], t] -= lr * coef[j] * w_in[c, t]
        for t in range(d):
            w_in[c, t] -= lr * grad_u[t]
        lr = max(lr - lr_step, lr_floor)
    return total


def _run_shard(w_in, w_out, centers, contexts, noise, negatives, lr_start, lr_step, lr_floor, rng, losses):
    negs = noise.draw(rng, (centers.size, negatives)) if centers.size else np.zeros((0, negatives), np.int64)
    losses.append(_sgd_kernel(w_in, w_out, centers, contexts, negs.astype(np.int64),
                              float(lr_start), float(lr_step), float(lr_floor)))


def sgns_train(corpus: WalkCorpus, config: SgnsConfig, id_to_cui: Sequence[str] | None = None,
               noise_counts=None) -> EmbeddingTable:
    """Train centre/context matrices by SGD and return the centre matrix.

    ``noise_counts`` overrides the corpus token counts as the source of the
    negative-sampling distribution. The per-epoch mean pair loss is stored in
    ``table.meta["loss_history"]`` and the context matrix in
    ``table.meta["context_vectors"]``.
    """
    config.validate()
    if corpus.num_tokens == 0:
        raise EmptyCorpus("corpus has no tokens")
    n, d = corpus.num_nodes, config.dimension
    if id_to_cui is None:
        id_to_cui = [str(i) for i in range(n)]
    if len(id_to_cui) != n:
        raise ValueError("id_to_cui length must equal corpus num_nodes")
    counts = corpus.vocabulary_counts
    if counts.size > n:
        raise ValueError("corpus contains ids outside the vocabulary")
    noise = NoiseDistribution(counts if noise_counts is None else noise_counts, config.unigram_power)

    rng = np.random.default_rng(config.seed)
    w_in = rng.uniform(-0.5 / d, 0.5 / d, size=(n, d))
    w_out = np.zeros((n, d))

    centers, contexts = training_pairs(corpus.walks, config.window)
    n_pairs = centers.size
    total_pairs = max(1, n_pairs * config.epochs)
    lr0 = config.initial_lr
    lr_floor = lr0 / 100.0
    lr_step = (lr0 - lr_floor) / total_pairs
    history = []
    workers = config.workers
    for epoch in range(config.epochs):
        lr_start = lr0 - lr_step * n_pairs * epoch
        losses: list[float] = []
        if workers == 1:
            _run_shard(w_in, w_out, centers, contexts, noise, config.negatives,
                       lr_start, lr_step, lr_floor, rng, losses)
        else:
            # lock-free shared updates; results depend on thread scheduling
            bounds = np.linspace(0, n_pairs, workers + 1).astype(int)
            threads = []
            for wid in range(workers):
                sl = slice(bounds[wid], bounds[wid + 1])
                wrng = np.random.default_rng([config.seed ^ wid, epoch])
                threads.append(threading.Thread(target=_run_shard, args=(
                    w_in, w_out, centers[sl], contexts[sl], noise, config.negatives,
                    lr_start, lr_step * workers, lr_floor, wrng, losses)))
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        history.append(sum(losses) / max(1, n_pairs))

    meta = {"method": "sgns", "config": asdict(config), "loss_history": history,
            "num_pairs": int(n_pairs), "context_vectors": w_out}
    table = EmbeddingTable(w_in, EUCLIDEAN, id_to_cui, meta)
    table.check()
    return table
