"""Synthetic data generators shared across the test suite."""

import numpy as np

from phonocoref.coref import Mention
from phonocoref.disperser import CandidateSet


def _unit(rng, d):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def make_anisotropic_sets(n_sets, dim=16, mean_scale=30.0, kappa=0.9,
                          distractor=0.7, noise=0.3, seed=11, phon_dim=0):
    """Candidate sets in the near-1 cosine regime.

    Every embedding family shares a large mean, so raw cosines sit above
    0.99.  Each set has a topic direction t: the context carries t, the gold
    candidate's deviation correlates with t (strength ``kappa``), the three
    distractors share a per-set off-topic direction (strength ``distractor``),
    and the pooled pair embedding blends the topic with the candidate
    deviation, the way a pooled (context, candidate) encoding would.
    """
    rng = np.random.default_rng(seed)
    d = dim
    mu_c, mu_q, mu_a = (mean_scale * _unit(rng, d) for _ in range(3))
    sets = []
    for i in range(n_sets):
        t = _unit(rng, d)
        s = _unit(rng, d)
        s = s - (s @ t) * t
        s /= np.linalg.norm(s)
        q = mu_q + t + 0.3 * noise * _unit(rng, d)
        gold = int(rng.integers(4))
        cands, cls, phon = [], [], []
        for j in range(4):
            if j == gold:
                delta = kappa * t + np.sqrt(1 - kappa**2) * _unit(rng, d)
            else:
                delta = distractor * s + np.sqrt(1 - distractor**2) * _unit(rng, d)
            cands.append(mu_a + delta)
            cls.append(mu_c + 0.5 * (t + delta) + noise * _unit(rng, d))
            phon.append(rng.normal(size=phon_dim))
        sets.append(CandidateSet(
            set_id=f"set{i}", q=q, candidates=np.stack(cands),
            cls=np.stack(cls), gold=gold,
            phon=np.stack(phon) if phon_dim else None))
    return sets


def within_set_cls_cosine_mean(sets):
    vals = []
    for s in sets:
        for i in range(4):
            for j in range(i + 1, 4):
                a, b = s.cls[i], s.cls[j]
                vals.append(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
    return float(np.mean(vals))


def make_mentions(n_clusters=4, per_cluster=3, lemma_noise=0, seed=0):
    """Synthetic mention corpus: cluster k uses lemma lk, except that
    ``lemma_noise`` mentions per cluster get a divergent lemma."""
    rng = np.random.default_rng(seed)
    mentions = []
    k = 0
    for c in range(n_clusters):
        for i in range(per_cluster):
            lemma = f"l{c}"
            if i < lemma_noise:
                lemma = f"l{c}x{i}"
            sentence = f"event {c}-{i} happened here"
            start = sentence.index("happened")
            mentions.append(Mention(
                mention_id=f"m{k:03d}", doc_id=f"d{rng.integers(3)}",
                sentence=sentence, span_start=start, span_end=start + len("happened"),
                lemma=lemma, gold_cluster=f"g{c}", topic=f"t{c % 2}"))
            k += 1
    return mentions


def make_separable_pair_data(n=40, dim=6, margin=1.0, seed=3):
    """Linearly separable pair features: label = sign of the first coordinate,
    with a hard margin."""
    rng = np.random.default_rng(seed)
    feats, labels = [], []
    for i in range(n):
        label = i % 2
        x = rng.normal(size=dim)
        x[0] = (1 if label else -1) * (margin + abs(x[0]))
        feats.append(x)
        labels.append(label)
    return np.stack(feats), np.array(labels)


def mention_embeddings_jsonl(mentions, dim=8, seed=4):
    """Embeddings JSONL text for a mention corpus: span vectors clustered by
    gold cluster, plus per-mention cls vectors."""
    import json

    rng = np.random.default_rng(seed)
    centers = {}
    records = []
    for m in mentions:
        c = centers.setdefault(m.gold_cluster, rng.normal(size=dim) * 3)
        span = c + 0.1 * rng.normal(size=dim)
        records.append({"id": m.mention_id, "role": "span", "vector": span.tolist()})
        records.append({"id": m.mention_id, "role": "cls",
                        "vector": (0.5 * c + 0.05 * rng.normal(size=dim)).tolist()})
    header = {"count": len(records), "dim": dim, "dtype": "f32"}
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    lines += [json.dumps(r, sort_keys=True, separators=(",", ":")) for r in records]
    return "\n".join(lines) + "\n"
