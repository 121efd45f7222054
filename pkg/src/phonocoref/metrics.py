"""Coreference evaluation: MUC, B-cubed, CEAF-e, BLANC and CoNLL F1.

Inputs are a key (gold) and a response (system) clustering, each a collection
of disjoint mention chains.  When the two sides cover different mentions the
default behaviour unions the universes, treating missing mentions as
singletons on the deficient side; ``strict=True`` raises instead.

Conventions for degenerate cases (documented because reference scorers
disagree): MUC with no links on a side scores 0 for that side; a BLANC link
class that is empty in both key and response scores (1, 1, 1), and one empty
in exactly one side scores (0, 0, 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import MentionUniverseMismatchError


@dataclass(frozen=True)
class MetricResult:
    precision: float
    recall: float
    f1: float

    def astuple(self):
        return (self.precision, self.recall, self.f1)

    def to_dict(self):
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class MetricReport:
    muc: MetricResult
    b_cubed: MetricResult
    ceaf_e: MetricResult
    blanc: MetricResult
    conll_f1: float

    def to_dict(self):
        return {"muc": self.muc.to_dict(), "b_cubed": self.b_cubed.to_dict(),
                "ceaf_e": self.ceaf_e.to_dict(), "blanc": self.blanc.to_dict(),
                "conll_f1": self.conll_f1}


def _as_chains(chains):
    """Accept [[ids]] or {cid: [ids]}; drop empty chains; check disjointness."""
    if hasattr(chains, "values"):
        chains = list(chains.values())
    out = []
    seen = set()
    for c in chains:
        c = frozenset(c)
        if not c:
            continue
        if c & seen:
            raise ValueError("chains must be disjoint")
        seen |= c
        out.append(c)
    return out


def _universe(chains):
    u = set()
    for c in chains:
        u |= c
    return u


def _align_universes(key, response, strict):
    key = _as_chains(key)
    response = _as_chains(response)
    ku, ru = _universe(key), _universe(response)
    if ku != ru:
        if strict:
            raise MentionUniverseMismatchError(
                f"key-only mentions {sorted(ku - ru)[:5]}, response-only {sorted(ru - ku)[:5]}")
        key = key + [frozenset([m]) for m in sorted(ru - ku)]
        response = response + [frozenset([m]) for m in sorted(ku - ru)]
    return key, response


def _prf(p_num, p_den, r_num, r_den):
    p = p_num / p_den if p_den > 0 else 0.0
    r = r_num / r_den if r_den > 0 else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return MetricResult(p, r, f)


# ---------------------------------------------------------------------------
# MUC
# ---------------------------------------------------------------------------

def _muc_side(gold, other):
    """Link-based numerator/denominator: sum of |S| - |partition of S by the
    other side| over gold chains.  Singleton chains contribute nothing."""
    owner = {m: i for i, c in enumerate(other) for m in c}
    num = den = 0
    for chain in gold:
        parts = {owner.get(m, ("solo", m)) for m in chain}
        num += len(chain) - len(parts)
        den += len(chain) - 1
    return num, den


def muc(key, response, strict=False) -> MetricResult:
    key, response = _align_universes(key, response, strict)
    r_num, r_den = _muc_side(key, response)
    p_num, p_den = _muc_side(response, key)
    return _prf(p_num, p_den, r_num, r_den)


# ---------------------------------------------------------------------------
# B-cubed
# ---------------------------------------------------------------------------

def _b_cubed_side(gold, other):
    """Per-mention overlap ratio |gold ∩ other| / |gold|, summed."""
    other_of = {m: c for c in other for m in c}
    total = 0.0
    count = 0
    for chain in gold:
        for m in chain:
            total += len(chain & other_of.get(m, frozenset())) / len(chain)
            count += 1
    return total, count


def b_cubed(key, response, strict=False) -> MetricResult:
    key, response = _align_universes(key, response, strict)
    r_num, r_den = _b_cubed_side(key, response)
    p_num, p_den = _b_cubed_side(response, key)
    return _prf(p_num, p_den, r_num, r_den)


# ---------------------------------------------------------------------------
# CEAF-e
# ---------------------------------------------------------------------------

def _phi4(a, b):
    return 2.0 * len(a & b) / (len(a) + len(b))


def ceaf_e(key, response, strict=False) -> MetricResult:
    """Entity-based CEAF: optimal one-to-one chain alignment maximizing phi4,
    solved as a linear assignment problem."""
    key, response = _align_universes(key, response, strict)
    if not key or not response:
        return MetricResult(0.0, 0.0, 0.0)
    sim = np.zeros((len(key), len(response)))
    for i, kc in enumerate(key):
        for j, rc in enumerate(response):
            sim[i, j] = _phi4(kc, rc)
    rows, cols = linear_sum_assignment(-sim)
    best = float(sim[rows, cols].sum())
    return _prf(best, len(response), best, len(key))


# ---------------------------------------------------------------------------
# BLANC
# ---------------------------------------------------------------------------

def _coref_links(chains):
    links = set()
    for c in chains:
        links.update(frozenset(p) for p in combinations(sorted(c), 2))
    return links


def blanc(key, response, strict=False) -> MetricResult:
    key, response = _align_universes(key, response, strict)
    mentions = sorted(_universe(key) | _universe(response))
    all_pairs = {frozenset(p) for p in combinations(mentions, 2)}
    ck, cr = _coref_links(key), _coref_links(response)
    nk, nr = all_pairs - ck, all_pairs - cr

    def link_class(gold, sys):
        if not gold and not sys:
            return MetricResult(1.0, 1.0, 1.0)
        if not gold or not sys:
            return MetricResult(0.0, 0.0, 0.0)
        inter = len(gold & sys)
        return _prf(inter, len(sys), inter, len(gold))

    c = link_class(ck, cr)
    n = link_class(nk, nr)
    return MetricResult((c.precision + n.precision) / 2,
                        (c.recall + n.recall) / 2,
                        (c.f1 + n.f1) / 2)


# ---------------------------------------------------------------------------
# CoNLL F1 and the full report
# ---------------------------------------------------------------------------

def conll_f1(muc_f1, b_cubed_f1, ceaf_e_f1):
    return (muc_f1 + b_cubed_f1 + ceaf_e_f1) / 3.0


def evaluate(key, response, strict=False) -> MetricReport:
    m = muc(key, response, strict)
    b = b_cubed(key, response, strict)
    c = ceaf_e(key, response, strict)
    bl = blanc(key, response, strict)
    return MetricReport(muc=m, b_cubed=b, ceaf_e=c, blanc=bl,
                        conll_f1=conll_f1(m.f1, b.f1, c.f1))


def format_report_table(report: MetricReport) -> str:
    """Aligned plain-text table, columns ordered BCUB, MUC, CEAF-e, BLANC, C-F1."""
    cols = [("BCUB", report.b_cubed), ("MUC", report.muc),
            ("CEAF-e", report.ceaf_e), ("BLANC", report.blanc)]
    header = "".join(f"{name + ' ' + part:>12}" for name, _ in cols for part in ("P", "R", "F1"))
    header += f"{'C-F1':>12}"
    row = "".join(f"{100 * v:>12.2f}" for _, res in cols
                  for v in (res.precision, res.recall, res.f1))
    row += f"{100 * report.conll_f1:>12.2f}"
    return header + "\n" + row + "\n"
