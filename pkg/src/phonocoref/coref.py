"""Cross-document event coreference over precomputed mention embeddings.

The pipeline: mark mention spans with trigger tokens, generate all unordered
mention pairs (label 1 iff the gold clusters match), score each pair with an
affine head trained under BCE, link pairs whose raw-logit affinity clears a
threshold, and read clusters off the connected components.  A lemma-match
heuristic provides the baseline clustering, and the diff-rate analysis splits
true-positive pairs by lemma identity.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    AlreadyMarkedError,
    DegenerateLabelsError,
    DimensionMismatchError,
    DuplicateMentionIdError,
    EmptyListError,
    InvalidSpanError,
    MissingLemmaError,
    NonFiniteLossError,
)

OPEN_MARK = "<m>"
CLOSE_MARK = "</m>"


def _nfc(s):
    return unicodedata.normalize("NFC", s)


@dataclass(frozen=True)
class Mention:
    mention_id: str
    doc_id: str
    sentence: str
    span_start: int
    span_end: int
    lemma: str
    gold_cluster: str
    topic: str | None = None

    def span_text(self):
        return self.sentence[self.span_start : self.span_end]


@dataclass
class MentionPair:
    a: str  # lexicographically smaller mention id
    b: str
    label: int | None = None
    features: np.ndarray | None = None
    affinity: float | None = None

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("a pair needs two distinct mentions")
        if self.a > self.b:
            self.a, self.b = self.b, self.a


@dataclass
class PairwiseScorerParams:
    w: np.ndarray
    b: float
    epochs: int = 10
    seed: int = 0

    def to_dict(self):
        return {"w": np.asarray(self.w).tolist(), "b": self.b,
                "epochs": self.epochs, "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(w=np.array(d["w"], dtype=np.float64), b=float(d["b"]),
                   epochs=int(d.get("epochs", 10)), seed=int(d.get("seed", 0)))


# ---------------------------------------------------------------------------
# mention marking and pair generation
# ---------------------------------------------------------------------------

def mark_mentions(m: Mention) -> str:
    """Surround the trigger span with <m> ... </m>."""
    s = m.sentence
    if OPEN_MARK in s or CLOSE_MARK in s:
        raise AlreadyMarkedError(f"{m.mention_id}: sentence already carries trigger tokens")
    if not (0 <= m.span_start <= m.span_end <= len(s)):
        raise InvalidSpanError(
            f"{m.mention_id}: span [{m.span_start}, {m.span_end}) outside sentence of length {len(s)}")
    return (s[: m.span_start] + f"{OPEN_MARK} " + s[m.span_start : m.span_end]
            + f" {CLOSE_MARK}" + s[m.span_end :])


def strip_marks(marked: str) -> str:
    return marked.replace(f"{OPEN_MARK} ", "").replace(f" {CLOSE_MARK}", "")


def generate_pairs(mentions, topic_filter=False):
    """All unordered mention pairs, labelled 1 iff the gold clusters match.

    With ``topic_filter`` only pairs sharing a topic are generated (mentions
    without a topic never match in that mode).
    """
    seen = set()
    for m in mentions:
        if m.mention_id in seen:
            raise DuplicateMentionIdError(m.mention_id)
        seen.add(m.mention_id)
    mentions = sorted(mentions, key=lambda m: m.mention_id)
    pairs = []
    for i in range(len(mentions)):
        for j in range(i + 1, len(mentions)):
            mi, mj = mentions[i], mentions[j]
            if topic_filter and (mi.topic is None or mi.topic != mj.topic):
                continue
            pairs.append(MentionPair(
                a=mi.mention_id, b=mj.mention_id,
                label=int(mi.gold_cluster == mj.gold_cluster)))
    return pairs


def build_pair_features(cls_vec, fx, fy):
    """cls ⊕ f(x) ⊕ f(y) ⊕ (f(x) ⊙ f(y))."""
    cls_vec = np.asarray(cls_vec, dtype=np.float64)
    fx = np.asarray(fx, dtype=np.float64)
    fy = np.asarray(fy, dtype=np.float64)
    if fx.shape != fy.shape:
        raise DimensionMismatchError(f"f(x) {fx.shape} vs f(y) {fy.shape}")
    return np.concatenate([cls_vec, fx, fy, fx * fy])


def attach_pair_features(pairs, embeddings):
    """Fill each pair's feature vector from an embedding map keyed by
    (id, role).  The pooled pair vector comes from a ("a|b", "cls") record
    when present, otherwise the mean of the two per-mention cls vectors,
    otherwise zeros; span vectors are required."""
    for p in pairs:
        fx, fy = embeddings[(p.a, "span")], embeddings[(p.b, "span")]
        key = (f"{p.a}|{p.b}", "cls")
        if key in embeddings:
            cls_vec = embeddings[key]
        else:
            parts = [embeddings[k] for k in ((p.a, "cls"), (p.b, "cls"))
                     if k in embeddings]
            cls_vec = np.mean(parts, axis=0) if parts else np.zeros_like(fx)
        p.features = build_pair_features(cls_vec, fx, fy)
    return pairs


# ---------------------------------------------------------------------------
# pairwise scorer
# ---------------------------------------------------------------------------

def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def train_pairwise_scorer(features, labels, epochs=10, lr=0.5, seed=0,
                          batch_size=None):
    """Affine scorer head trained with BCE; full-batch gradient descent by
    default, seeded mini-batches otherwise."""
    F = np.asarray(features, dtype=np.float64)
    Y = np.asarray(labels, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] != Y.shape[0]:
        raise DimensionMismatchError("features and labels must align")
    if not (np.any(Y == 1) and np.any(Y == 0)):
        raise DegenerateLabelsError("need at least one positive and one negative pair")

    rng = np.random.default_rng(seed)
    dim = F.shape[1]
    w = rng.uniform(-1, 1, size=dim) / np.sqrt(dim)
    b = 0.0
    n = len(Y)
    batch = n if batch_size is None else max(1, min(batch_size, n))
    for epoch in range(epochs):
        order = rng.permutation(n) if batch < n else np.arange(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            z = F[idx] @ w + b
            p = _sigmoid(z)
            if not np.all(np.isfinite(p)):
                raise NonFiniteLossError(f"non-finite scorer output at epoch {epoch}")
            g = (p - Y[idx]) / len(idx)
            w = w - lr * (F[idx].T @ g)
            b = b - lr * float(np.sum(g))
    return PairwiseScorerParams(w=w, b=b, epochs=epochs, seed=seed)


def score_pairs(params, pairs):
    """Fill each pair's affinity with the raw (pre-sigmoid) logit."""
    out = []
    for p in pairs:
        if p.features is None:
            raise ValueError(f"pair ({p.a}, {p.b}) has no features")
        logit = float(np.asarray(p.features) @ params.w + params.b)
        out.append(replace(p, affinity=logit))
    return out


def mean_threshold(affinities):
    affinities = list(affinities)
    if not affinities:
        raise EmptyListError("mean over an empty affinity list")
    return float(np.mean(affinities))


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------

class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def _components_to_clustering(uf, mention_ids):
    groups = {}
    for mid in mention_ids:
        groups.setdefault(uf.find(mid), []).append(mid)
    # cluster ids are deterministic: c0, c1, ... ordered by smallest member
    assignment = {}
    for k, root in enumerate(sorted(groups, key=lambda r: min(groups[r]))):
        for mid in groups[root]:
            assignment[mid] = f"c{k}"
    return assignment


def cluster_connected_components(pairs, threshold, mention_ids=None):
    """Link pairs with affinity strictly above the threshold; clusters are the
    connected components, unlinked mentions become singletons."""
    ids = set(mention_ids or [])
    for p in pairs:
        ids.add(p.a)
        ids.add(p.b)
    uf = _UnionFind(ids)
    for p in pairs:
        if p.affinity is None:
            raise ValueError(f"pair ({p.a}, {p.b}) has no affinity")
        if p.affinity > threshold:
            uf.union(p.a, p.b)
    return _components_to_clustering(uf, sorted(ids))


def lemma_baseline(mentions):
    """Group mentions by exact lemma match (NFC-normalized)."""
    mentions = list(mentions)
    for m in mentions:
        if not m.lemma:
            raise MissingLemmaError(m.mention_id)
    by_lemma = {}
    for m in mentions:
        by_lemma.setdefault(_nfc(m.lemma), []).append(m.mention_id)
    uf = _UnionFind([m.mention_id for m in mentions])
    for ids in by_lemma.values():
        for other in ids[1:]:
            uf.union(ids[0], other)
    return _components_to_clustering(uf, sorted(m.mention_id for m in mentions))


def clustering_to_chains(assignment):
    chains = {}
    for mid, cid in assignment.items():
        chains.setdefault(cid, []).append(mid)
    return {cid: sorted(ms) for cid, ms in chains.items()}


def gold_clustering(mentions):
    """Clustering induced by the gold_cluster field."""
    uf = _UnionFind([m.mention_id for m in mentions])
    by_gold = {}
    for m in mentions:
        by_gold.setdefault(m.gold_cluster, []).append(m.mention_id)
    for ids in by_gold.values():
        for other in ids[1:]:
            uf.union(ids[0], other)
    return _components_to_clustering(uf, sorted(m.mention_id for m in mentions))


# ---------------------------------------------------------------------------
# lemma diff-rate analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffRate:
    true_positives: int
    same_lemma: int
    diff_lemma: int
    rate: float
    undefined: bool = False

    def to_dict(self):
        return {"tp": self.true_positives, "l1": self.same_lemma,
                "l2": self.diff_lemma, "diff_rate": self.rate,
                "undefined": self.undefined}


def diff_rate(predicted_positive_pairs, lemma_of) -> DiffRate:
    """Split true-positive pairs by lemma identity; rate = L2 / TP."""
    tp = l1 = 0
    for p in predicted_positive_pairs:
        if p.label != 1:
            continue
        tp += 1
        if _nfc(lemma_of[p.a]) == _nfc(lemma_of[p.b]):
            l1 += 1
    l2 = tp - l1
    if tp == 0:
        return DiffRate(0, 0, 0, 0.0, undefined=True)
    return DiffRate(tp, l1, l2, l2 / tp)
