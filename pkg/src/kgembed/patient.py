"""Next-visit diagnosis prediction with a single-layer LSTM over visit embeddings.

Each visit becomes the mean of its codes' concept vectors. The LSTM reads the
visit vectors in order and a softmax layer predicts the code distribution of
the following visit.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingTable
from .errors import EmptyDataset, NoMappedCodes, ShapeMismatch


@dataclass
class VisitSequence:
    patient_id: str
    visits: list[tuple[int, ...]]

    def __post_init__(self):
        self.visits = [tuple(sorted(set(int(c) for c in v))) for v in self.visits]

    def validate(self, m: int) -> None:
        if len(self.visits) < 2:
            raise ValueError(f"{self.patient_id}: need at least two visits")
        for v in self.visits:
            if not v:
                raise ValueError(f"{self.patient_id}: empty visit")
            if v[0] < 0 or v[-1] >= m:
                raise ValueError(f"{self.patient_id}: code outside [0, {m})")

    def to_json(self) -> str:
        return json.dumps({"patient_id": self.patient_id, "visits": [list(v) for v in self.visits]})


def save_cohort(sequences: Sequence[VisitSequence], path) -> None:
    Path(path).write_text("".join(s.to_json() + "\n" for s in sequences), encoding="utf-8")


def load_cohort(path) -> list[VisitSequence]:
    out = []
    for ln in Path(path).read_text(encoding="utf-8").splitlines():
        if ln.strip():
            rec = json.loads(ln)
            out.append(VisitSequence(rec["patient_id"], rec["visits"]))
    return out


def load_code_grouping(path) -> dict[int, int]:
    """Read a ``raw_code<TAB>group_code`` map; a header line is allowed."""
    mapping = {}
    for ln in Path(path).read_text(encoding="utf-8").splitlines():
        if not ln.strip() or ln.startswith("#"):
            continue
        raw, group = ln.split("\t")[:2]
        if not raw.lstrip("-").isdigit():
            continue
        mapping[int(raw)] = int(group)
    return mapping


def apply_grouping(sequences: Sequence[VisitSequence], mapping: Mapping[int, int]) -> list[VisitSequence]:
    """Replace raw codes by group codes; codes missing from the map are dropped."""
    out = []
    for s in sequences:
        visits = [[mapping[c] for c in v if c in mapping] for v in s.visits]
        out.append(VisitSequence(s.patient_id, visits))
    return out


# ---------------------------------------------------------------- visit vectors

@dataclass
class VisitVector:
    vector: np.ndarray
    skipped: int = 0


def embed_visit(code_set, embedding_table: EmbeddingTable, code_to_cui: Mapping[int, str]) -> VisitVector:
    rows = []
    skipped = 0
    for code in code_set:
        cui = code_to_cui.get(int(code))
        if cui is None or cui not in embedding_table:
            skipped += 1
            continue
        rows.append(embedding_table.index_of(cui))
    if not rows:
        raise NoMappedCodes(f"none of {sorted(code_set)} maps to an embedded concept")
    return VisitVector(embedding_table.vectors[rows].mean(axis=0), skipped)


class VisitEncoder:
    """Precomputed code → vector matrix for fast visit averaging."""

    def __init__(self, embedding_table: EmbeddingTable, code_to_cui: Mapping[int, str], m: int):
        self.m = m
        self.dimension = embedding_table.dimension
        self.code_vectors = np.zeros((m, self.dimension))
        self.mapped = np.zeros(m, dtype=bool)
        for code, cui in code_to_cui.items():
            if 0 <= code < m and cui in embedding_table:
                self.code_vectors[code] = embedding_table[cui]
                self.mapped[code] = True

    def encode(self, visit) -> np.ndarray:
        codes = [c for c in visit if self.mapped[c]]
        if not codes:
            raise NoMappedCodes(f"none of {list(visit)} maps to an embedded concept")
        return self.code_vectors[codes].mean(axis=0)

    def encode_sequence(self, seq: VisitSequence) -> np.ndarray:
        return np.stack([self.encode(v) for v in seq.visits])


# ---------------------------------------------------------------- LSTM

@dataclass
class LSTMParams:
    """Gate blocks are stacked in the order input, forget, output, candidate."""
    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray
    w_y: np.ndarray
    b_y: np.ndarray

    NAMES = ("w_x", "w_h", "b", "w_y", "b_y")

    @classmethod
    def init(cls, d: int, h: int, m: int, rng) -> "LSTMParams":
        s = 1.0 / np.sqrt(h)
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        return cls(rng.uniform(-s, s, (4 * h, d)), rng.uniform(-s, s, (4 * h, h)), b,
                   rng.uniform(-s, s, (m, h)), np.zeros(m))

    @classmethod
    def zeros(cls, d: int, h: int, m: int) -> "LSTMParams":
        return cls(np.zeros((4 * h, d)), np.zeros((4 * h, h)), np.zeros(4 * h),
                   np.zeros((m, h)), np.zeros(m))

    @property
    def shapes(self):
        h = self.w_h.shape[1]
        return self.w_x.shape[1], h, self.w_y.shape[0]

    def check(self) -> None:
        d, h, m = self.shapes
        expect = {"w_x": (4 * h, d), "w_h": (4 * h, h), "b": (4 * h,), "w_y": (m, h), "b_y": (m,)}
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ShapeMismatch(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in self.NAMES]

    def copy(self) -> "LSTMParams":
        return LSTMParams(*(a.copy() for a in self.arrays()))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(x: np.ndarray, params: LSTMParams):
    """Batched forward pass. ``x`` is (T, B, d); returns outputs and caches."""
    T, B, _ = x.shape
    _, h, _ = params.shapes
    hs = np.zeros((T + 1, B, h))
    cs = np.zeros((T + 1, B, h))
    gates = np.zeros((T, B, 4 * h))
    for t in range(T):
        z = x[t] @ params.w_x.T + hs[t] @ params.w_h.T + params.b
        g = np.empty_like(z)
        g[:, :3 * h] = _sigmoid(z[:, :3 * h])
        g[:, 3 * h:] = np.tanh(z[:, 3 * h:])
        gates[t] = g
        i, f, o, cand = g[:, :h], g[:, h:2 * h], g[:, 2 * h:3 * h], g[:, 3 * h:]
        cs[t + 1] = f * cs[t] + i * cand
        hs[t + 1] = o * np.tanh(cs[t + 1])
    probs = _softmax(hs[1:] @ params.w_y.T + params.b_y)
    return probs, (hs, cs, gates)


def lstm_forward(visit_vectors: np.ndarray, params: LSTMParams):
    """Hidden states h_1..h_t and the softmax predictions after each step.

    Returns ``(hidden, predictions)`` of shapes (t, h) and (t, m); the last
    prediction row is the forecast for visit t + 1.
    """
    x = np.asarray(visit_vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeMismatch("visit_vectors must be a non-empty (t, d) array")
    params.check()
    if x.shape[1] != params.shapes[0]:
        raise ShapeMismatch(f"visit vectors have dimension {x.shape[1]}, params expect {params.shapes[0]}")
    probs, (hs, _, _) = _forward(x[:, None, :], params)
    return hs[1:, 0], probs[:, 0]


def loss_and_grad(x: np.ndarray, targets: np.ndarray, mask: np.ndarray, params: LSTMParams):
    """Summed cross-entropy over valid steps and its gradient by backpropagation through time.

    ``x`` is (T, B, d), ``targets`` (T, B, m) rows summing to one, ``mask`` (T, B).
    """
    probs, (hs, cs, gates) = _forward(x, params)
    T, B, _ = x.shape
    _, h, _ = params.shapes
    loss = -float(np.sum(mask[..., None] * targets * np.log(np.maximum(probs, 1e-300))))
    dlogits = (probs - targets) * mask[..., None]
    grads = LSTMParams.zeros(*params.shapes)
    grads.w_y = np.einsum("tbm,tbh->mh", dlogits, hs[1:])
    grads.b_y = dlogits.sum(axis=(0, 1))
    dh_next = np.zeros((B, h))
    dc_next = np.zeros((B, h))
    for t in range(T - 1, -1, -1):
        g = gates[t]
        i, f, o, cand = g[:, :h], g[:, h:2 * h], g[:, 2 * h:3 * h], g[:, 3 * h:]
        tc = np.tanh(cs[t + 1])
        dh = dlogits[t] @ params.w_y + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = np.empty((B, 4 * h))
        dz[:, :h] = dc * cand * i * (1.0 - i)
        dz[:, h:2 * h] = dc * cs[t] * f * (1.0 - f)
        dz[:, 2 * h:3 * h] = dh * tc * o * (1.0 - o)
        dz[:, 3 * h:] = dc * i * (1.0 - cand * cand)
        grads.w_x += dz.T @ x[t]
        grads.w_h += dz.T @ hs[t]
        grads.b += dz.sum(axis=0)
        dh_next = dz @ params.w_h
        dc_next = dc * f
    return loss, grads


# ---------------------------------------------------------------- training

@dataclass
class PatientModelConfig:
    vocabulary_size: int
    embedding_dimension: int
    hidden_size: int = 128
    epochs: int = 20
    learning_rate: float = 2.0
    batch_size: int = 16
    clip_norm: float = 5.0
    seed: int = 0

    def validate(self) -> "PatientModelConfig":
        for name in ("vocabulary_size", "embedding_dimension", "hidden_size", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0 or self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("epochs must be non-negative, learning_rate and clip_norm positive")
        return self


def multi_hot(codes, m: int) -> np.ndarray:
    y = np.zeros(m)
    y[list(codes)] = 1.0
    return y / y.sum()


@dataclass
class PatientModel:
    params: LSTMParams
    encoder: VisitEncoder
    config: PatientModelConfig
    loss_history: list[float] = field(default_factory=list)
    code_counts: np.ndarray | None = None
    initial_params: LSTMParams | None = None

    def predict(self, seq: VisitSequence) -> np.ndarray:
        """Predicted distributions for visits 2..T given each prefix, shape (T-1, m)."""
        x = self.encoder.encode_sequence(seq)[:-1]
        return lstm_forward(x, self.params)[1]


def visit_code_counts(sequences: Sequence[VisitSequence], m: int) -> np.ndarray:
    """Number of visits containing each code."""
    counts = np.zeros(m, dtype=np.int64)
    for s in sequences:
        for v in s.visits:
            counts[list(v)] += 1
    return counts


def _batch(encoded, target_seqs, idx, m):
    T = max(encoded[i].shape[0] - 1 for i in idx)
    d = encoded[idx[0]].shape[1]
    x = np.zeros((T, len(idx), d))
    y = np.zeros((T, len(idx), m))
    mask = np.zeros((T, len(idx)))
    for b, i in enumerate(idx):
        n = encoded[i].shape[0] - 1
        x[:n, b] = encoded[i][:-1]
        for t in range(n):
            y[t, b] = multi_hot(target_seqs[i].visits[t + 1], m)
        mask[:n, b] = 1.0
    return x, y, mask


def train_patient_model(sequences: Sequence[VisitSequence], embedding_table: EmbeddingTable,
                        config: PatientModelConfig, code_to_cui: Mapping[int, str] | None = None,
                        target_sequences: Sequence[VisitSequence] | None = None) -> PatientModel:
    """Mini-batch gradient descent with global-norm clipping on next-visit cross-entropy.

    ``target_sequences`` (same lengths as ``sequences``) supplies the targets
    instead of the inputs' own next visits; used for shuffled-label controls.
    By default code ``i`` maps to row ``i`` of the embedding table.
    """
    config.validate()
    if not sequences:
        raise EmptyDataset("no training sequences")
    m = config.vocabulary_size
    for s in sequences:
        s.validate(m)
    if embedding_table.dimension != config.embedding_dimension:
        raise ShapeMismatch("embedding_dimension does not match the embedding table")
    if code_to_cui is None:
        code_to_cui = {i: embedding_table.id_to_cui[i] for i in range(min(m, len(embedding_table)))}
    targets = list(sequences) if target_sequences is None else list(target_sequences)
    if len(targets) != len(sequences) or any(
            len(a.visits) != len(b.visits) for a, b in zip(sequences, targets)):
        raise ValueError("target_sequences must align with sequences")

    encoder = VisitEncoder(embedding_table, code_to_cui, m)
    encoded = [encoder.encode_sequence(s) for s in sequences]
    rng = np.random.default_rng(config.seed)
    params = LSTMParams.init(config.embedding_dimension, config.hidden_size, m, rng)
    initial = params.copy()
    history = []
    n = len(sequences)
    for _ in range(config.epochs):
        total, count = 0.0, 0.0
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            x, y, mask = _batch(encoded, targets, idx, m)
            loss, grads = loss_and_grad(x, y, mask, params)
            steps = mask.sum()
            total += loss
            count += steps
            arrays = [g / steps for g in grads.arrays()]
            norm = np.sqrt(sum(float(np.sum(a * a)) for a in arrays))
            scale = min(1.0, config.clip_norm / norm) if norm > 0 else 1.0
            for p, g in zip(params.arrays(), arrays):
                p -= config.learning_rate * scale * g
        history.append(total / count)
    return PatientModel(params, encoder, config, history, visit_code_counts(sequences, m), initial)


# ---------------------------------------------------------------- evaluation

@dataclass(frozen=True)
class AllDiagnoses:
    name = "all_diagnoses"
    k = None


@dataclass(frozen=True)
class FrequentTopK:
    k: int = 20
    name = "frequent_top_k"


@dataclass(frozen=True)
class RareTopK:
    k: int = 20
    min_visits: int = 100
    name = "rare_top_k"


@dataclass(frozen=True)
class RecallAtK:
    k: int = 20
    name = "recall_at_k"


def restricted_codes(objective, code_counts: np.ndarray) -> np.ndarray | None:
    """Code subset an objective scores on; ``None`` means all codes."""
    m = code_counts.size
    if isinstance(objective, FrequentTopK):
        order = np.lexsort((np.arange(m), -code_counts))
        return np.sort(order[:objective.k])
    if isinstance(objective, RareTopK):
        eligible = np.flatnonzero(code_counts >= objective.min_visits)
        order = eligible[np.lexsort((eligible, code_counts[eligible]))]
        return np.sort(order[:objective.k])
    return None


def score_predictions(predictions: Sequence[np.ndarray], targets: Sequence[Sequence[int]], objective,
                      code_counts: np.ndarray | None = None) -> tuple[float, int]:
    """Mean per-visit recall and the number of visits scored.

    For a visit with true codes C (restricted to the objective's code subset)
    the score is |top-n predicted ∩ C| / |C| with n = |C|, or n = k and a
    denominator of min(k, |C|) for :class:`RecallAtK`. Visits whose
    restricted C is empty are skipped.
    """
    m = predictions[0].size if len(predictions) else 0
    if code_counts is None:
        code_counts = np.zeros(m, dtype=np.int64)
    subset = restricted_codes(objective, code_counts)
    allowed = np.ones(m, dtype=bool) if subset is None else np.isin(np.arange(m), subset)
    scores = []
    for pred, true in zip(predictions, targets):
        true = [c for c in set(true) if allowed[c]]
        if not true:
            continue
        ranked = np.lexsort((np.arange(m), -np.asarray(pred)))
        ranked = ranked[allowed[ranked]]
        if isinstance(objective, RecallAtK):
            top, denom = ranked[:objective.k], min(objective.k, len(true))
        else:
            top, denom = ranked[:len(true)], len(true)
        scores.append(len(set(top.tolist()) & set(true)) / denom)
    return (float(np.mean(scores)) if scores else 0.0), len(scores)


def _collect(model: PatientModel, test_sequences):
    preds, targets = [], []
    for s in test_sequences:
        p = model.predict(s)
        for t in range(p.shape[0]):
            preds.append(p[t])
            targets.append(s.visits[t + 1])
    return preds, targets


def prediction_report(model: PatientModel, test_sequences: Sequence[VisitSequence], objective,
                      code_counts: np.ndarray | None = None) -> dict:
    if code_counts is None:
        code_counts = model.code_counts
    preds, targets = _collect(model, test_sequences)
    score, n = score_predictions(preds, targets, objective, code_counts)
    return {"objective": objective.name, "k": getattr(objective, "k", None), "score": score,
            "n_visits_evaluated": n}


def evaluate_prediction(model: PatientModel, test_sequences: Sequence[VisitSequence], objective,
                        code_counts: np.ndarray | None = None) -> float:
    """Score ``test_sequences``; code frequencies default to the training cohort's."""
    return prediction_report(model, test_sequences, objective, code_counts)["score"]


def split_patients(sequences: Sequence[VisitSequence], train_fraction: float = 0.8, seed=0):
    perm = np.random.default_rng(seed).permutation(len(sequences))
    cut = int(round(train_fraction * len(sequences)))
    train = [sequences[i] for i in sorted(perm[:cut])]
    test = [sequences[i] for i in sorted(perm[cut:])]
    overlap = {s.patient_id for s in train} & {s.patient_id for s in test}
    if overlap:
        raise ValueError(f"patients in both splits: {sorted(overlap)[:5]}")
    return train, test


# ---------------------------------------------------------------- synthetic cohorts

@dataclass
class CycleRule:
    """Codes are split into ``n_sets`` contiguous blocks; block i is always followed by block i+1 mod n."""
    n_sets: int = 3
    min_visits: int = 4
    max_visits: int = 8

    def code_sets(self, m: int) -> list[tuple[int, ...]]:
        if self.n_sets > m:
            raise ValueError("more code sets than codes")
        return [tuple(int(c) for c in block) for block in np.array_split(np.arange(m), self.n_sets)]


@dataclass
class ZipfMarkovRule:
    """Latent-state Markov chain with Zipf-distributed code inclusion.

    Code c (rank c + 1) enters a visit independently with probability
    ``lam * (c+1)**-s * boost``, where the boost multiplies codes owned by the
    current state (c mod n_states) by ``1 - a + a * n_states`` and all others
    by ``1 - a``. The state chain stays with probability ``stay`` and otherwise
    steps to the next state, so states are uniform at stationarity and the
    marginal inclusion rate of every code is exactly ``lam * (c+1)**-s``.
    Empty visits are redrawn, which rescales all rates equally.
    """
    n_states: int = 5
    zipf_exponent: float = 1.0
    mean_visit_size: float = 3.0
    stay: float = 0.5
    state_strength: float = 0.5
    min_visits: int = 4
    max_visits: int = 8

    def inclusion(self, m: int) -> np.ndarray:
        base = np.arange(1, m + 1, dtype=np.float64) ** -self.zipf_exponent
        a, k = self.state_strength, self.n_states
        peak = 1.0 - a + a * k
        lam = min(self.mean_visit_size / base.sum(), 1.0 / peak)
        probs = np.empty((k, m))
        for s in range(k):
            boost = np.where(np.arange(m) % k == s, peak, 1.0 - a)
            probs[s] = lam * base * boost
        return probs


def generate_synthetic_cohort(n_patients: int, m: int, transition_rule, seed=0) -> list[VisitSequence]:
    if m < 2:
        raise ValueError("vocabulary size must be at least 2")
    rng = np.random.default_rng(seed)
    rule = transition_rule
    out = []
    if isinstance(rule, CycleRule):
        sets = rule.code_sets(m)
        for p in range(n_patients):
            t = int(rng.integers(rule.min_visits, rule.max_visits + 1))
            s0 = int(rng.integers(rule.n_sets))
            visits = [sets[(s0 + j) % rule.n_sets] for j in range(t)]
            out.append(VisitSequence(f"P{p:06d}", visits))
    elif isinstance(rule, ZipfMarkovRule):
        probs = rule.inclusion(m)
        for p in range(n_patients):
            t = int(rng.integers(rule.min_visits, rule.max_visits + 1))
            state = int(rng.integers(rule.n_states))
            visits = []
            for _ in range(t):
                codes = np.zeros(0, dtype=np.int64)
                while codes.size == 0:
                    codes = np.flatnonzero(rng.random(m) < probs[state])
                visits.append(tuple(codes.tolist()))
                if rng.random() >= rule.stay:
                    state = (state + 1) % rule.n_states
            out.append(VisitSequence(f"P{p:06d}", visits))
    else:
        raise TypeError(f"unsupported transition rule {type(rule).__name__}")
    return out


def shuffle_targets(sequences: Sequence[VisitSequence], seed=0) -> list[VisitSequence]:
    """Permute whole target sequences across patients of equal length."""
    rng = np.random.default_rng(seed)
    by_len: dict[int, list[int]] = {}
    for i, s in enumerate(sequences):
        by_len.setdefault(len(s.visits), []).append(i)
    out: list[VisitSequence | None] = [None] * len(sequences)
    for idx in by_len.values():
        perm = rng.permutation(idx)
        for i, j in zip(idx, perm):
            out[i] = sequences[int(j)]
    return out


def config_dict(config: PatientModelConfig) -> dict:
    return asdict(config)
