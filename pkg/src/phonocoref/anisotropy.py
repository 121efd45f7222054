"""Within-set and beyond-set cosine-similarity diagnostics.

A "set" is one Cloze-style question: a context vector plus the four
candidate pairings.  Within-set similarities compare the candidate pairings
of one question with each other (6 values per set); beyond-set similarities
compare vectors drawn from two different questions.  The summary statistics
use the population convention (variance divided by N).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import EmptyListError, InsufficientSetsError, ZeroNormVectorError


@dataclass(frozen=True)
class SimilarityStats:
    mean: float
    variance: float
    stdev: float
    min: float

    def to_dict(self):
        return {"mean": self.mean, "variance": self.variance,
                "stdev": self.stdev, "min": self.min}


def cosine(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroNormVectorError("cosine undefined for zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


def _combined_vectors(s, combine="cls"):
    """One vector per candidate: the stored pooled-pair embedding by default,
    or the question-plus-candidate vector sum with ``combine='sum'``."""
    if combine == "cls":
        return [s.cls[i] for i in range(4)]
    if combine == "sum":
        return [s.q + s.candidates[i] for i in range(4)]
    raise ValueError(f"unknown combine mode {combine!r}")


def within_set_similarities(s, combine="cls"):
    """Cosines of all unordered candidate pairings of one set: C(4,2) = 6."""
    vecs = _combined_vectors(s, combine)
    return [cosine(vecs[i], vecs[j]) for i, j in combinations(range(4), 2)]


def beyond_set_similarities(sets, sample_n=100, seed=0, combine="cls"):
    """Cosines between vectors drawn from two distinct sets.

    Each draw picks two different sets, then one candidate vector from each.
    Sampling is seeded, so results are reproducible.
    """
    sets = list(sets)
    if len(sets) < 2:
        raise InsufficientSetsError("beyond-set similarities need >= 2 sets")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(sample_n):
        i, j = rng.choice(len(sets), size=2, replace=False)
        vi = _combined_vectors(sets[i], combine)[rng.integers(4)]
        vj = _combined_vectors(sets[j], combine)[rng.integers(4)]
        out.append(cosine(vi, vj))
    return out


def summarize(values) -> SimilarityStats:
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        raise EmptyListError("summarize over an empty list")
    mean = float(values.mean())
    var = float(values.var())  # population variance
    return SimilarityStats(mean=mean, variance=var, stdev=float(np.sqrt(var)),
                           min=float(values.min()))


def export_distribution(values, bins):
    """Histogram rows (bin_left, bin_right, count); counts sum to len(values)."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        return []
    counts, edges = np.histogram(values, bins=bins)
    return [(float(edges[k]), float(edges[k + 1]), int(counts[k])) for k in range(bins)]


def histogram_csv(rows):
    lines = ["bin_left,bin_right,count"]
    for left, right, count in rows:
        lines.append(f"{left!r},{right!r},{count}")
    return "\n".join(lines) + "\n"


def format_stats_table(named_stats):
    """Plain-text table in the report layout: one column per model/config,
    rows Mean / Variance / Stdev / Min.  Population variance, noted in the
    footer."""
    names = list(named_stats)
    rows = [("Mean", "mean"), ("Variance", "variance"),
            ("Stdev", "stdev"), ("Min", "min")]
    width = max(10, *(len(n) for n in names)) + 2
    out = [" " * 10 + "".join(f"{n:>{width}}" for n in names)]
    for label, attr in rows:
        cells = "".join(f"{getattr(named_stats[n], attr):>{width}.6g}" for n in names)
        out.append(f"{label:<10}{cells}")
    out.append("# variance is population (divide by N)")
    return "\n".join(out) + "\n"
