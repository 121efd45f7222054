"""Extract pooled and span-averaged embeddings for trigger-marked mentions.

For every mention the exporter builds the token sequence

    [CLS] prefix <m> span </m> suffix [SEP]

runs the encoder in inference mode, and emits two records into the toolkit's
embeddings JSONL: the pooled sentence vector (role ``cls``) and the average
of the hidden states of the tokens between the trigger markers (role
``span``).  Building the sequence from the three sentence parts keeps the
marked token positions exact without needing offset mappings.

Mentions whose marked region is cut off by the sequence-length limit are
still exported, averaged over the surviving marked tokens (zeros when none
survive), and flagged as truncated.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

logger = logging.getLogger(__name__)

OPEN_MARK = "<m>"
CLOSE_MARK = "</m>"


@dataclass
class ExportRequest:
    checkpoint: str
    input_path: str
    output_path: str
    max_len: int = 128
    batch_size: int = 16
    pooled: str = "pooler"  # "pooler" activation or "raw" first-token state


@dataclass
class ExportReport:
    records: int = 0
    truncated: list = field(default_factory=list)
    added_trigger_tokens: bool = False
    dim: int = 0


def load_mentions(path):
    mentions = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                mentions.append(json.loads(line))
    return mentions


class Exporter:
    def __init__(self, checkpoint, pooled="pooler"):
        if pooled not in {"pooler", "raw"}:
            raise ValueError(f"unknown pooled mode {pooled!r}")
        self.pooled = pooled
        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self.model, load_info = AutoModel.from_pretrained(
            checkpoint, output_loading_info=True)
        if pooled == "pooler" and any("pooler" in k
                                      for k in load_info.get("missing_keys", [])):
            # an MLM-only checkpoint carries no pooler weights; a randomly
            # initialized pooler would make exports non-reproducible
            warnings.warn("checkpoint has no trained pooler; exporting the "
                          "raw first-token state as the pooled vector")
            self.pooled = "raw"
        self.added_trigger_tokens = False
        missing = [t for t in (OPEN_MARK, CLOSE_MARK)
                   if self.tokenizer.convert_tokens_to_ids(t)
                   == self.tokenizer.unk_token_id]
        if missing:
            old_size = self.model.get_input_embeddings().weight.shape[0]
            self.tokenizer.add_tokens(missing)
            self.model.resize_token_embeddings(len(self.tokenizer))
            # deterministic init: new rows take the mean of the pretrained
            # embedding matrix, so repeated exports stay identical
            with torch.no_grad():
                emb = self.model.get_input_embeddings().weight
                emb[old_size:] = emb[:old_size].mean(dim=0)
            self.added_trigger_tokens = True
            warnings.warn(
                f"trigger tokens {missing} were not in the checkpoint "
                "vocabulary; added with mean-embedding initialization")
        self.model.eval()

    @property
    def dim(self):
        return self.model.config.hidden_size

    def _encode_mention(self, mention, max_len):
        """Token ids plus the index range of the span tokens (markers excluded)."""
        tok = self.tokenizer
        s = mention["sentence"]
        a, b = mention["span_start"], mention["span_end"]
        prefix = tok.tokenize(s[:a])
        span = tok.tokenize(s[a:b])
        suffix = tok.tokenize(s[b:])
        tokens = ([tok.cls_token] + prefix + [OPEN_MARK] + span + [CLOSE_MARK]
                  + suffix + [tok.sep_token])
        span_lo = 1 + len(prefix) + 1
        span_hi = span_lo + len(span)

        truncated = len(tokens) > max_len
        if truncated:
            tokens = tokens[: max_len - 1] + [tok.sep_token]
            span_hi = min(span_hi, max_len - 1)
            span_lo = min(span_lo, span_hi)
        ids = tok.convert_tokens_to_ids(tokens)
        return ids, (span_lo, span_hi), truncated

    def export(self, mentions, max_len=128, batch_size=16):
        """Yields (mention_id, cls_vector, span_vector, truncated)."""
        pad_id = self.tokenizer.pad_token_id
        for start in range(0, len(mentions), batch_size):
            batch = mentions[start : start + batch_size]
            encoded = [self._encode_mention(m, max_len) for m in batch]
            width = max(len(ids) for ids, _, _ in encoded)
            input_ids = torch.full((len(batch), width), pad_id, dtype=torch.long)
            attention = torch.zeros((len(batch), width), dtype=torch.long)
            for i, (ids, _, _) in enumerate(encoded):
                input_ids[i, : len(ids)] = torch.tensor(ids)
                attention[i, : len(ids)] = 1
            with torch.no_grad():
                out = self.model(input_ids=input_ids, attention_mask=attention)
            hidden = out.last_hidden_state
            if self.pooled == "pooler" and getattr(out, "pooler_output", None) is not None:
                pooled = out.pooler_output
            else:
                pooled = hidden[:, 0]
            for i, (m, (ids, (lo, hi), truncated)) in enumerate(zip(batch, encoded)):
                if hi > lo:
                    span_vec = hidden[i, lo:hi].mean(dim=0)
                else:
                    span_vec = torch.zeros(self.dim)
                if truncated:
                    logger.warning("mention %s: marked span truncated at max_len",
                                   m["mention_id"])
                yield (m["mention_id"],
                       pooled[i].numpy().astype(np.float64),
                       span_vec.numpy().astype(np.float64),
                       truncated)


def run_export(req: ExportRequest) -> ExportReport:
    exporter = Exporter(req.checkpoint, pooled=req.pooled)
    mentions = load_mentions(req.input_path)
    report = ExportReport(added_trigger_tokens=exporter.added_trigger_tokens,
                          dim=exporter.dim)

    rows = []
    for mid, cls_vec, span_vec, truncated in exporter.export(
            mentions, max_len=req.max_len, batch_size=req.batch_size):
        rows.append({"id": mid, "role": "cls", "vector": cls_vec.tolist()})
        rec = {"id": mid, "role": "span", "vector": span_vec.tolist()}
        if truncated:
            rec["truncated"] = True
            report.truncated.append(mid)
        rows.append(rec)

    with open(req.output_path, "w", encoding="utf-8") as fh:
        header = {"count": len(rows), "dim": exporter.dim, "dtype": "f32"}
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")
    report.records = len(rows)
    return report
