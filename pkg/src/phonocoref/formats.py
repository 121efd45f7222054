"""File formats and validation.

All on-disk formats are line-oriented JSON or plain JSON:

* embeddings JSONL: first line is a header record ``{"dim", "dtype", "count"}``,
  every following line an ``EmbeddingRecord`` ``{"id", "role", "vector"}``;
* candidate-set JSONL: one set per line with inline vectors;
* mentions JSONL: one mention per line;
* pairs JSONL: ``{"a", "b", "affinity", "label"}``;
* clusters JSON: ``{cluster_id: [mention_ids]}`` plus a reserved ``_meta`` key.

Writers are deterministic (sorted keys, no timestamps) so identical inputs
produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import __version__
from .coref import Mention, MentionPair
from .disperser import CandidateSet

EMBEDDING_ROLES = {"cls", "arg1", "arg2", "span"}


@dataclass(frozen=True)
class EmbeddingRecord:
    id: str
    role: str
    vector: tuple


@dataclass(frozen=True)
class Failure:
    file: str
    line: int  # 0 for file-level problems
    message: str

    def __str__(self):
        return f"{self.file}:{self.line}: {self.message}"


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config, input_digests):
    payload = _dumps({"config": config, "inputs": input_digests})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def file_digest(data: bytes):
    return hashlib.sha256(data).hexdigest()


def meta_block(cfg_hash):
    return {"config_hash": cfg_hash, "version": __version__}


# ---------------------------------------------------------------------------
# embeddings JSONL
# ---------------------------------------------------------------------------

def write_embeddings(records, dim, fh):
    records = list(records)
    fh.write(_dumps({"count": len(records), "dim": dim, "dtype": "f32"}) + "\n")
    for r in records:
        fh.write(_dumps({"id": r.id, "role": r.role, "vector": list(r.vector)}) + "\n")


def parse_embeddings(text):
    """Returns (header, {(id, role): np.ndarray}) from JSONL text."""
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty embeddings content")
    header = json.loads(lines[0])
    out = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        rec = json.loads(line)
        out[(rec["id"], rec["role"])] = np.array(rec["vector"], dtype=np.float64)
    return header, out


def read_embeddings(path):
    """Returns (header, {(id, role): np.ndarray}).  Raises on malformed files;
    use validate_embeddings for itemized diagnostics."""
    with open(path, encoding="utf-8") as fh:
        return parse_embeddings(fh.read())


def validate_embeddings(path):
    failures = []
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        return [Failure(str(path), 0, f"cannot read: {exc}")]
    if not lines:
        return [Failure(str(path), 0, "empty file, header record required")]
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        return [Failure(str(path), 1, f"bad header JSON: {exc}")]
    dim = header.get("dim")
    if not isinstance(dim, int) or dim <= 0:
        failures.append(Failure(str(path), 1, "header must declare a positive integer dim"))
        dim = None
    if header.get("dtype") != "f32":
        failures.append(Failure(str(path), 1, f"unsupported dtype {header.get('dtype')!r}"))
    seen = set()
    count = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        count += 1
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            failures.append(Failure(str(path), lineno, f"bad JSON: {exc}"))
            continue
        role = rec.get("role")
        if role not in EMBEDDING_ROLES:
            failures.append(Failure(str(path), lineno, f"unknown role {role!r}"))
        key = (rec.get("id"), role)
        if key in seen:
            failures.append(Failure(str(path), lineno, f"duplicate record {key}"))
        seen.add(key)
        vec = rec.get("vector")
        if not isinstance(vec, list):
            failures.append(Failure(str(path), lineno, "vector must be a list"))
            continue
        if dim is not None and len(vec) != dim:
            failures.append(Failure(
                str(path), lineno, f"vector length {len(vec)} != declared dim {dim}"))
        if not all(isinstance(x, (int, float)) and np.isfinite(x) for x in vec):
            failures.append(Failure(str(path), lineno, "vector has non-finite entries"))
    declared = header.get("count")
    if isinstance(declared, int) and declared != count:
        failures.append(Failure(str(path), 1, f"header count {declared} != {count} records"))
    return failures


# ---------------------------------------------------------------------------
# candidate-set JSONL
# ---------------------------------------------------------------------------

def write_sets(sets, fh):
    for s in sets:
        rec = {"set_id": s.set_id, "q": s.q.tolist(),
               "candidates": s.candidates.tolist(), "cls": s.cls.tolist(),
               "gold": s.gold}
        if s.phon is not None:
            rec["phon"] = s.phon.tolist()
        fh.write(_dumps(rec) + "\n")


def read_sets(path):
    sets = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            sets.append(CandidateSet(
                set_id=rec["set_id"], q=rec["q"], candidates=rec["candidates"],
                cls=rec["cls"], gold=rec["gold"], phon=rec.get("phon")))
    return sets


def validate_sets(path):
    failures = []
    dim = None
    seen = set()
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        return [Failure(str(path), 0, f"cannot read: {exc}")]
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            failures.append(Failure(str(path), lineno, f"bad JSON: {exc}"))
            continue
        sid = rec.get("set_id")
        if sid in seen:
            failures.append(Failure(str(path), lineno, f"duplicate set_id {sid!r}"))
        seen.add(sid)
        cands = rec.get("candidates") or []
        cls = rec.get("cls") or []
        if len(cands) != 4 or len(cls) != 4:
            failures.append(Failure(str(path), lineno, "need exactly 4 candidates and 4 cls vectors"))
            continue
        if rec.get("gold") not in (0, 1, 2, 3):
            failures.append(Failure(str(path), lineno, f"gold {rec.get('gold')!r} out of range"))
        lengths = {len(rec.get("q", []))} | {len(v) for v in cands} | {len(v) for v in cls}
        if len(lengths) != 1:
            failures.append(Failure(str(path), lineno, f"inconsistent vector lengths {sorted(lengths)}"))
            continue
        this_dim = lengths.pop()
        if dim is None:
            dim = this_dim
        elif this_dim != dim:
            failures.append(Failure(
                str(path), lineno, f"vector length {this_dim} drifts from first-line {dim}"))
        phon = rec.get("phon")
        if phon is not None and (len(phon) != 4 or len({len(v) for v in phon}) != 1):
            failures.append(Failure(str(path), lineno, "phon must hold 4 equal-length vectors"))
    return failures


# ---------------------------------------------------------------------------
# mentions JSONL
# ---------------------------------------------------------------------------

def write_mentions(mentions, fh):
    for m in mentions:
        rec = {"mention_id": m.mention_id, "doc_id": m.doc_id, "sentence": m.sentence,
               "span_start": m.span_start, "span_end": m.span_end,
               "lemma": m.lemma, "gold_cluster": m.gold_cluster}
        if m.topic is not None:
            rec["topic"] = m.topic
        fh.write(_dumps(rec) + "\n")


def read_mentions(path):
    mentions = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            mentions.append(Mention(
                mention_id=rec["mention_id"], doc_id=rec["doc_id"],
                sentence=rec["sentence"], span_start=rec["span_start"],
                span_end=rec["span_end"], lemma=rec["lemma"],
                gold_cluster=rec["gold_cluster"], topic=rec.get("topic")))
    return mentions


def validate_mentions(path):
    failures = []
    seen = set()
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        return [Failure(str(path), 0, f"cannot read: {exc}")]
    required = ("mention_id", "doc_id", "sentence", "span_start", "span_end",
                "lemma", "gold_cluster")
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            failures.append(Failure(str(path), lineno, f"bad JSON: {exc}"))
            continue
        missing = [k for k in required if k not in rec]
        if missing:
            failures.append(Failure(str(path), lineno, f"missing fields {missing}"))
            continue
        mid = rec["mention_id"]
        if mid in seen:
            failures.append(Failure(str(path), lineno, f"duplicate mention_id {mid!r}"))
        seen.add(mid)
        if not rec["lemma"]:
            failures.append(Failure(str(path), lineno, f"{mid}: empty lemma"))
        if not (0 <= rec["span_start"] <= rec["span_end"] <= len(rec["sentence"])):
            failures.append(Failure(str(path), lineno, f"{mid}: span outside sentence"))
    return failures


def cross_reference_failures(mentions_path, embeddings_path):
    """Every mention needs a span embedding; pair-cls ids must name mentions."""
    failures = []
    mentions = {m.mention_id for m in read_mentions(mentions_path)}
    try:
        _, emb = read_embeddings(embeddings_path)
    except (ValueError, json.JSONDecodeError):
        return []  # unreadable embeddings are reported by validate_embeddings
    span_ids = {mid for (mid, role) in emb if role == "span"}
    for mid in sorted(mentions - span_ids):
        failures.append(Failure(str(mentions_path), 0,
                                f"mention {mid!r} has no span embedding"))
    for (eid, role) in emb:
        if role == "span" and eid not in mentions:
            failures.append(Failure(str(embeddings_path), 0,
                                    f"span embedding {eid!r} references no mention"))
        if role == "cls" and "|" in eid:
            a, _, b = eid.partition("|")
            for part in (a, b):
                if part not in mentions:
                    failures.append(Failure(str(embeddings_path), 0,
                                            f"pair cls {eid!r} references unknown mention {part!r}"))
    return failures


# ---------------------------------------------------------------------------
# pairs JSONL and clusters JSON
# ---------------------------------------------------------------------------

def write_pairs(pairs, fh, cfg_hash=None, include_features=False):
    if cfg_hash is not None:
        fh.write(_dumps({"_meta": meta_block(cfg_hash)}) + "\n")
    for p in pairs:
        rec = {"a": p.a, "b": p.b, "affinity": p.affinity, "label": p.label}
        if include_features and p.features is not None:
            rec["features"] = np.asarray(p.features).tolist()
        fh.write(_dumps(rec) + "\n")


def read_pairs(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "_meta" in rec:
                continue
            features = rec.get("features")
            pairs.append(MentionPair(
                a=rec["a"], b=rec["b"], label=rec.get("label"),
                affinity=rec.get("affinity"),
                features=None if features is None else np.array(features)))
    return pairs


def write_clusters(assignment, fh, cfg_hash=None):
    """Clusters JSON: {cluster_id: [mention_ids]}; '_meta' is reserved."""
    clusters = {}
    for mid, cid in assignment.items():
        clusters.setdefault(cid, []).append(mid)
    payload = {cid: sorted(ms) for cid, ms in clusters.items()}
    if cfg_hash is not None:
        payload["_meta"] = meta_block(cfg_hash)
    fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def read_clusters(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return {cid: list(ms) for cid, ms in payload.items() if cid != "_meta"}
