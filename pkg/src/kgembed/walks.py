"""Random-walk corpora: second-order biased walks and metapath-constrained walks."""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidMetapath, StartGroupMismatch
from .graph import AliasTable, ConceptGraph

NODE2VEC = "node2vec"
METAPATH = "metapath"


@dataclass
class WalkConfig:
    walks_per_node: int = 10
    walk_length: int = 20
    p: float = 1.0
    q: float = 1.0
    seed: int = 0
    workers: int = 1
    relation_weights: dict | None = None

    def validate(self) -> "WalkConfig":
        if int(self.walks_per_node) != self.walks_per_node or self.walks_per_node < 1:
            raise ValueError("walks_per_node must be a positive integer")
        if int(self.walk_length) != self.walk_length or self.walk_length < 1:
            raise ValueError("walk_length must be a positive integer")
        if not (self.p > 0 and self.q > 0):
            raise ValueError("p and q must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        return self


@dataclass(frozen=True)
class Metapath:
    pattern: tuple[str, ...] = ("DISO", "CHEM", "DISO")

    def __post_init__(self):
        object.__setattr__(self, "pattern", tuple(self.pattern))
        if len(self.pattern) < 2:
            raise InvalidMetapath("metapath needs at least two groups")

    @property
    def cycle(self) -> tuple[str, ...]:
        # a closed pattern (first == last) does not repeat its first group at the seam
        if len(self.pattern) > 2 and self.pattern[0] == self.pattern[-1]:
            return self.pattern[:-1]
        return self.pattern

    def target_group(self, step: int) -> str:
        """Group required for the node reached at move ``step`` (0-based)."""
        cyc = self.cycle
        return cyc[(step + 1) % len(cyc)]

    def transitions(self) -> list[tuple[str, str]]:
        cyc = self.cycle
        return [(cyc[i], cyc[(i + 1) % len(cyc)]) for i in range(len(cyc))]

    def check_schema(self, graph: ConceptGraph) -> None:
        present = set()
        g = graph.groups
        for u, v in graph.edges():
            present.add((g[u], g[v]))
            present.add((g[v], g[u]))
        for a, b in self.transitions():
            if (a, b) not in present:
                raise InvalidMetapath(f"no edge connects {a} to {b} in this graph")


@dataclass
class WalkCorpus:
    walks: list[list[int]]
    num_nodes: int
    meta: dict = field(default_factory=dict)

    @property
    def vocabulary_counts(self) -> np.ndarray:
        if not self.walks:
            return np.zeros(self.num_nodes, dtype=np.int64)
        return np.bincount(np.concatenate([np.asarray(w, dtype=np.int64) for w in self.walks]),
                           minlength=self.num_nodes)

    @property
    def num_tokens(self) -> int:
        return sum(len(w) for w in self.walks)

    def __len__(self):
        return len(self.walks)

    def to_text(self) -> str:
        return "".join(" ".join(map(str, w)) + "\n" for w in self.walks)

    def save(self, path) -> None:
        path = Path(path)
        path.write_text(self.to_text(), encoding="utf-8")
        sidecar = dict(self.meta, num_nodes=self.num_nodes, num_walks=len(self.walks))
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "WalkCorpus":
        path = Path(path)
        meta = json.loads(Path(str(path) + ".json").read_text())
        walks = [[int(t) for t in ln.split()] for ln in path.read_text().splitlines() if ln.strip()]
        n = meta.pop("num_nodes")
        meta.pop("num_walks", None)
        return cls(walks, n, meta)


class Node2vecSampler:
    """Second-order transition sampler with lazily cached per-edge alias tables."""

    def __init__(self, graph: ConceptGraph, p: float = 1.0, q: float = 1.0, relation_weights=None):
        self.graph = graph
        self.p = float(p)
        self.q = float(q)
        self.weights = graph.edge_weights(relation_weights)
        self.uniform = bool(np.all(self.weights == 1.0))
        self.unbiased = self.p == 1.0 and self.q == 1.0
        self._node_tables: dict[int, AliasTable] = {}
        self._edge_tables: dict[tuple[int, int], AliasTable] = {}

    def _first(self, cur: int, nbrs: np.ndarray, rng) -> int:
        if self.uniform:
            return int(nbrs[rng.integers(nbrs.size)])
        table = self._node_tables.get(cur)
        if table is None:
            lo, hi = self.graph.indptr[cur], self.graph.indptr[cur + 1]
            table = self._node_tables[cur] = AliasTable(self.weights[lo:hi])
        return int(nbrs[table.sample(rng)])

    def transition_weights(self, prev: int, cur: int) -> np.ndarray:
        """Unnormalized weights over ``neighbors(cur)`` given the previous node."""
        g = self.graph
        lo, hi = g.indptr[cur], g.indptr[cur + 1]
        w = self.weights[lo:hi].copy()
        prev_nbrs = g.neighbor_set(prev)
        for j, x in enumerate(g.indices[lo:hi]):
            if x == prev:
                w[j] /= self.p
            elif int(x) not in prev_nbrs:
                w[j] /= self.q
        return w

    def step(self, prev: int | None, cur: int, rng) -> int | None:
        nbrs = self.graph.neighbors(cur)
        if nbrs.size == 0:
            return None
        if prev is None or self.unbiased:
            return self._first(cur, nbrs, rng)
        key = (prev, cur)
        table = self._edge_tables.get(key)
        if table is None:
            table = self._edge_tables[key] = AliasTable(self.transition_weights(prev, cur))
        return int(nbrs[table.sample(rng)])

    def walk(self, start: int, length: int, rng) -> list[int]:
        walk = [int(start)]
        prev = None
        while len(walk) < length:
            nxt = self.step(prev, walk[-1], rng)
            if nxt is None:
                break
            prev = walk[-1]
            walk.append(nxt)
        return walk


def node2vec_walk(graph: ConceptGraph, start: int, config: WalkConfig, rng=None, sampler=None) -> list[int]:
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if sampler is None:
        sampler = Node2vecSampler(graph, config.p, config.q, config.relation_weights)
    return sampler.walk(start, config.walk_length, rng)


class MetapathSampler:
    def __init__(self, graph: ConceptGraph, metapath: Metapath):
        self.graph = graph
        self.metapath = metapath
        self._cache: dict[tuple[int, str], np.ndarray] = {}

    def typed_neighbors(self, u: int, group: str) -> np.ndarray:
        key = (u, group)
        out = self._cache.get(key)
        if out is None:
            nbrs = self.graph.neighbors(u)
            out = self._cache[key] = nbrs[self.graph.groups[nbrs] == group]
        return out

    def walk(self, start: int, length: int, rng) -> list[int]:
        first = self.metapath.pattern[0]
        group = self.graph.groups[start]
        if group != first:
            raise StartGroupMismatch(int(start), group, first)
        walk = [int(start)]
        while len(walk) < length:
            cands = self.typed_neighbors(walk[-1], self.metapath.target_group(len(walk) - 1))
            if cands.size == 0:
                break
            walk.append(int(cands[rng.integers(cands.size)]))
        return walk


def metapath_walk(graph: ConceptGraph, start: int, metapath: Metapath, length: int, rng=None) -> list[int]:
    if rng is None:
        rng = np.random.default_rng()
    return MetapathSampler(graph, metapath).walk(start, length, rng)


def _walk_shard(graph, engine, config, metapath, starts, worker_id):
    rng = np.random.default_rng(config.seed ^ worker_id)
    if engine == NODE2VEC:
        sampler = Node2vecSampler(graph, config.p, config.q, config.relation_weights)
    else:
        sampler = MetapathSampler(graph, metapath)
    walks = []
    starts = np.asarray(starts, dtype=np.int64)
    for _ in range(config.walks_per_node):
        for s in rng.permutation(starts):
            walks.append(sampler.walk(int(s), config.walk_length, rng))
    return walks


def generate_corpus(graph: ConceptGraph, engine: str, config: WalkConfig, metapath: Metapath | None = None) -> WalkCorpus:
    """Run ``walks_per_node`` walks from every eligible start node.

    With one worker the corpus is a deterministic function of the seed. With
    several, start nodes are dealt round-robin to worker processes, each with
    its own stream seeded by ``seed ^ worker_id``.
    """
    config.validate()
    if engine == NODE2VEC:
        if metapath is not None:
            raise ValueError("metapath is only valid with the metapath engine")
        starts = np.arange(graph.num_nodes)
    elif engine == METAPATH:
        if metapath is None:
            raise ValueError("metapath engine requires a metapath")
        metapath.check_schema(graph)
        starts = np.flatnonzero(graph.groups == metapath.pattern[0])
    else:
        raise ValueError(f"unknown walk engine {engine!r}")

    if config.workers == 1:
        walks = _walk_shard(graph, engine, config, metapath, starts, 0)
    else:
        shards = [starts[w::config.workers] for w in range(config.workers)]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_walk_shard, graph, engine, config, metapath, s, w)
                       for w, s in enumerate(shards)]
            walks = [walk for f in futures for walk in f.result()]

    meta = {"engine": engine, "config": asdict(config)}
    if metapath is not None:
        meta["metapath"] = list(metapath.pattern)
    return WalkCorpus(walks, graph.num_nodes, meta)
