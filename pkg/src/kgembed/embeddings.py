"""Embedding tables and the word2vec text format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import MissingEmbedding

EUCLIDEAN = "euclidean"
HYPERBOLIC = "hyperbolic"


@dataclass
class EmbeddingTable:
    vectors: np.ndarray
    geometry: str
    id_to_cui: list[str]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.id_to_cui = list(self.id_to_cui)
        if self.geometry not in (EUCLIDEAN, HYPERBOLIC):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.id_to_cui):
            raise ValueError("vectors must be a (len(id_to_cui), d) matrix")
        self._index = {c: i for i, c in enumerate(self.id_to_cui)}

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]

    def __contains__(self, cui):
        return cui in self._index

    def index_of(self, cui: str) -> int:
        try:
            return self._index[cui]
        except KeyError:
            raise MissingEmbedding(cui) from None

    def lookup(self, cuis: Sequence[str]) -> np.ndarray:
        return self.vectors[[self.index_of(c) for c in cuis]]

    def __getitem__(self, cui: str) -> np.ndarray:
        return self.vectors[self.index_of(cui)]

    def check(self) -> None:
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding table contains NaN or Inf")
        if self.geometry == HYPERBOLIC and len(self) and np.max(np.linalg.norm(self.vectors, axis=1)) >= 1.0:
            raise ValueError("hyperbolic embedding row outside the unit ball")

    def to_word2vec_text(self, decimals: int = 6) -> str:
        n, d = self.vectors.shape
        fmt = f"{{:.{decimals}f}}"
        lines = [f"{n} {d}"]
        for cui, row in zip(self.id_to_cui, self.vectors):
            lines.append(cui + " " + " ".join(fmt.format(x) for x in row))
        return "\n".join(lines) + "\n"

    def sidecar(self) -> dict:
        out = {"geometry": self.geometry, "count": len(self), "dimension": self.dimension}
        out.update({k: v for k, v in self.meta.items() if _jsonable(v)})
        return out

    def save(self, path) -> None:
        path = Path(path)
        path.write_text(self.to_word2vec_text(), encoding="utf-8")
        Path(str(path) + ".json").write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path, geometry: str | None = None) -> "EmbeddingTable":
        path = Path(path)
        side = Path(str(path) + ".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        geometry = geometry or meta.pop("geometry", EUCLIDEAN)
        meta.pop("geometry", None)
        cuis, vectors = read_word2vec_text(path.read_text(encoding="utf-8"))
        table = cls(vectors, geometry, cuis, meta)
        if geometry == HYPERBOLIC and len(table):
            # 6-decimal rounding can nudge boundary rows outward
            eps = float(meta.get("ball_epsilon", 1e-5))
            norms = np.linalg.norm(table.vectors, axis=1, keepdims=True)
            over = norms[:, 0] >= 1.0 - eps
            table.vectors[over] *= (1.0 - eps) / norms[over]
        return table


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def read_word2vec_text(text: str) -> tuple[list[str], np.ndarray]:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty embedding file")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError("header must be '<count> <dimension>'")
    n, d = int(header[0]), int(header[1])
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n:
        raise ValueError(f"header declares {n} rows, found {len(body)}")
    cuis = []
    vectors = np.empty((n, d))
    for i, ln in enumerate(body):
        parts = ln.split(" ")
        if len(parts) != d + 1:
            raise ValueError(f"row {i + 1}: expected {d} values, found {len(parts) - 1}")
        cuis.append(parts[0])
        vectors[i] = [float(x) for x in parts[1:]]
    return cuis, vectors


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarity; zero vectors give 0."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    num = np.sum(a * b, axis=1)
    den = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)
