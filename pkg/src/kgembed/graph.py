"""Immutable typed concept graph and alias-method sampling."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import AllZeroWeights, DuplicateCui
from .ingest import ConceptRecord, RelationRecord, SemanticTypeRecord


@dataclass(frozen=True)
class Node:
    cui: str
    name: str
    semantic_type: str
    semantic_group: str


@dataclass(frozen=True)
class Relation:
    """Directed typed relation between two dense node ids."""
    head: int
    tail: int
    relation_type: str
    is_hierarchical: bool


class AliasTable:
    """Walker/Vose alias table for O(1) categorical sampling."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        peak = w.max()
        if peak <= 0:
            raise AllZeroWeights("at least one weight must be positive")
        w = w / peak  # guards against sums that overflow or are subnormal
        n = w.size
        scaled = w * (n / w.sum())
        prob = np.ones(n)
        alias = np.arange(n, dtype=np.int64)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = (scaled[g] + scaled[s]) - 1.0
            if scaled[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        # leftovers are 1 up to rounding
        self.probabilities = prob
        self.aliases = alias

    def __len__(self):
        return self.probabilities.size

    def sample(self, rng: np.random.Generator, size=None):
        n = self.probabilities.size
        if size is None:
            i = int(rng.integers(n))
            return i if rng.random() < self.probabilities[i] else int(self.aliases[i])
        idx = rng.integers(n, size=size)
        keep = rng.random(size) < self.probabilities[idx]
        return np.where(keep, idx, self.aliases[idx])

    def distribution(self) -> np.ndarray:
        """Exact distribution induced by the table."""
        n = self.probabilities.size
        p = self.probabilities.copy()
        np.add.at(p, self.aliases, 1.0 - self.probabilities)
        return p / n


def build_alias_table(weights) -> AliasTable:
    return AliasTable(weights)


class ConceptGraph:
    """Concept nodes plus directed typed relations, with an undirected CSR view.

    The undirected view collapses parallel and reverse relations into one edge;
    neighbor arrays are sorted by id. The directed typed relation list is kept
    for dataset construction.
    """

    def __init__(self, nodes: Sequence[Node], relations: Sequence[Relation]):
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self.relations: tuple[Relation, ...] = tuple(relations)
        self.node_index: dict[str, int] = {}
        for i, node in enumerate(self.nodes):
            if node.cui in self.node_index:
                raise DuplicateCui(node.cui)
            self.node_index[node.cui] = i
        n = len(self.nodes)

        edge_types: dict[tuple[int, int], set[str]] = {}
        for r in self.relations:
            if not (0 <= r.head < n and 0 <= r.tail < n):
                raise ValueError(f"relation endpoint out of range: {r}")
            if r.head == r.tail:
                continue
            key = (min(r.head, r.tail), max(r.head, r.tail))
            edge_types.setdefault(key, set()).add(r.relation_type)
        self._edge_types = {k: tuple(sorted(v)) for k, v in edge_types.items()}

        pairs = np.array(sorted(self._edge_types), dtype=np.int64).reshape(-1, 2)
        self._edges = pairs
        src = np.concatenate([pairs[:, 0], pairs[:, 1]])
        dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.indptr, src + 1, 1)
        np.cumsum(self.indptr, out=self.indptr)
        self.indices = dst
        self._neighbor_sets: list[frozenset] | None = None
        self.groups = np.array([nd.semantic_group for nd in self.nodes], dtype=object)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return int(self._edges.shape[0])

    def edges(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with u < v."""
        return self._edges

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def degree(self, u: int) -> int:
        return int(self.indptr[u + 1] - self.indptr[u])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbor_set(self, u: int) -> frozenset:
        if self._neighbor_sets is None:
            self._neighbor_sets = [frozenset(self.neighbors(i).tolist()) for i in range(self.num_nodes)]
        return self._neighbor_sets[u]

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self._edge_types

    def edge_relation_types(self, u: int, v: int) -> tuple[str, ...]:
        return self._edge_types.get((min(u, v), max(u, v)), ())

    def isolated_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.degrees() == 0)

    def group_counts(self) -> dict[str, int]:
        return dict(sorted(Counter(nd.semantic_group for nd in self.nodes).items()))

    def edge_weights(self, relation_weights: Mapping[str, float] | None = None) -> np.ndarray:
        """Transition weight per CSR entry; an edge takes the max over its relation types."""
        if not relation_weights:
            return np.ones(self.indices.size)
        out = np.empty(self.indices.size)
        for u in range(self.num_nodes):
            lo = self.indptr[u]
            for j, v in enumerate(self.neighbors(u)):
                out[lo + j] = max(relation_weights.get(t, 1.0)
                                  for t in self.edge_relation_types(u, int(v)))
        return out

    def summary(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "num_edges": self.num_edges,
            "num_relations": len(self.relations),
            "group_counts": self.group_counts(),
            "isolated_nodes": int(self.isolated_nodes().size),
        }

    def __eq__(self, other):
        if not isinstance(other, ConceptGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.relations == other.relations

    def __repr__(self):
        return f"ConceptGraph(|V|={self.num_nodes}, |E|={self.num_edges})"


def build_graph(
    concepts: Iterable[tuple[ConceptRecord, SemanticTypeRecord]],
    relations: Iterable[RelationRecord],
) -> ConceptGraph:
    nodes = [Node(c.cui, c.preferred_name, t.semantic_type, t.semantic_group) for c, t in concepts]
    g_index: dict[str, int] = {}
    for i, nd in enumerate(nodes):
        if nd.cui in g_index:
            raise DuplicateCui(nd.cui)
        g_index[nd.cui] = i
    rels = []
    for r in relations:
        try:
            rels.append(Relation(g_index[r.cui_head], g_index[r.cui_tail], r.relation_type, r.is_hierarchical))
        except KeyError as exc:
            raise ValueError(f"relation endpoint {exc.args[0]!r} is not a concept") from None
    return ConceptGraph(nodes, rels)


def graph_from_edges(edges, groups=None, semantic_types=None, relation_type="related_to", names=None) -> ConceptGraph:
    """Small-graph constructor used by fixtures and experiments.

    ``edges`` are (u, v) or (u, v, relation_type) tuples over integer ids;
    node count is inferred unless ``groups`` is given.
    """
    edges = [tuple(e) for e in edges]
    n = 1 + max((max(e[0], e[1]) for e in edges), default=-1)
    if groups is not None:
        n = max(n, len(groups))
    groups = list(groups) if groups is not None else ["DISO"] * n
    semantic_types = list(semantic_types) if semantic_types is not None else list(groups)
    names = list(names) if names is not None else [f"node {i}" for i in range(n)]
    nodes = [Node(f"N{i:06d}", names[i], semantic_types[i], groups[i]) for i in range(n)]
    rels = []
    for e in edges:
        rt = e[2] if len(e) > 2 else relation_type
        rels.append(Relation(int(e[0]), int(e[1]), rt, rt.lower() == "isa"))
    return ConceptGraph(nodes, rels)


def _escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


def _unescape(s: str) -> str:
    out = []
    it = iter(s)
    for ch in it:
        if ch == "\\":
            nxt = next(it, "")
            out.append({"t": "\t", "n": "\n", "r": "\r", "\\": "\\"}.get(nxt, nxt))
        else:
            out.append(ch)
    return "".join(out)


NODE_HEADER = ("cui", "name", "semantic_type", "semantic_group")
EDGE_HEADER = ("head_cui", "tail_cui", "relation_type", "is_hierarchical")


def snapshot_text(graph: ConceptGraph) -> str:
    lines = ["NODES", "\t".join(NODE_HEADER)]
    for nd in graph.nodes:
        lines.append("\t".join(_escape(x) for x in (nd.cui, nd.name, nd.semantic_type, nd.semantic_group)))
    lines += ["EDGES", "\t".join(EDGE_HEADER)]
    for r in graph.relations:
        lines.append("\t".join((
            _escape(graph.nodes[r.head].cui), _escape(graph.nodes[r.tail].cui),
            _escape(r.relation_type), "1" if r.is_hierarchical else "0")))
    return "\n".join(lines) + "\n"


def save_snapshot(graph: ConceptGraph, path) -> None:
    Path(path).write_text(snapshot_text(graph), encoding="utf-8")


def parse_snapshot(text: str) -> ConceptGraph:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 2 or lines[0] != "NODES" or tuple(lines[1].split("\t")) != NODE_HEADER:
        raise ValueError("snapshot must start with the NODES section")
    try:
        split = lines.index("EDGES")
    except ValueError:
        raise ValueError("snapshot has no EDGES section") from None
    if split + 1 >= len(lines) or tuple(lines[split + 1].split("\t")) != EDGE_HEADER:
        raise ValueError("EDGES section header missing")
    nodes = []
    for ln in lines[2:split]:
        fields = ln.split("\t")
        if len(fields) != 4:
            raise ValueError(f"bad node row: {ln!r}")
        nodes.append(Node(*(_unescape(f) for f in fields)))
    index = {nd.cui: i for i, nd in enumerate(nodes)}
    rels = []
    for ln in lines[split + 2:]:
        fields = ln.split("\t")
        if len(fields) != 4 or fields[3] not in ("0", "1"):
            raise ValueError(f"bad edge row: {ln!r}")
        head, tail, rt = (_unescape(f) for f in fields[:3])
        rels.append(Relation(index[head], index[tail], rt, fields[3] == "1"))
    return ConceptGraph(nodes, rels)


def load_snapshot(path) -> ConceptGraph:
    return parse_snapshot(Path(path).read_text(encoding="utf-8"))
