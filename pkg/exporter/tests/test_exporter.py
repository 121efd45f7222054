import json
import subprocess
import sys

import numpy as np
import pytest
import torch

from phonocoref_exporter.export import ExportRequest, run_export

VOCAB = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
         "the", "attack", "began", "a", "fire", "broke", "out", "yesterday",
         "villagers", "reported", "an", "explosion", "near", "market",
         "storm", "hit", "coast", "event", "##ful", "quick"]


def _make_checkpoint(path, with_pooler):
    from transformers import BertConfig, BertForMaskedLM, BertModel, BertTokenizer

    (path / "vocab.txt").write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    tokenizer = BertTokenizer(str(path / "vocab.txt"))
    torch.manual_seed(0)
    config = BertConfig(vocab_size=len(VOCAB), hidden_size=768,
                        num_hidden_layers=1, num_attention_heads=4,
                        intermediate_size=64, max_position_embeddings=160)
    model = BertModel(config) if with_pooler else BertForMaskedLM(config)
    tokenizer.save_pretrained(str(path))
    model.save_pretrained(str(path))
    return str(path)


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    """Tiny randomly initialized MLM-style checkpoint: 768-wide encoder,
    no pooler weights, no trigger tokens in the vocabulary."""
    return _make_checkpoint(tmp_path_factory.mktemp("ckpt"), with_pooler=False)


@pytest.fixture(scope="module")
def pooled_checkpoint(tmp_path_factory):
    """Same encoder but saved with a trained pooler head."""
    return _make_checkpoint(tmp_path_factory.mktemp("ckpt_pooled"), with_pooler=True)


@pytest.fixture(scope="module")
def mentions_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "mentions.jsonl"
    rows = [
        {"mention_id": "m1", "doc_id": "d0", "sentence": "the attack began",
         "span_start": 4, "span_end": 10, "lemma": "attack", "gold_cluster": "g0"},
        {"mention_id": "m2", "doc_id": "d0", "sentence": "a fire broke out yesterday",
         "span_start": 2, "span_end": 6, "lemma": "fire", "gold_cluster": "g1"},
        {"mention_id": "m3", "doc_id": "d1",
         "sentence": "villagers reported an explosion near the market",
         "span_start": 22, "span_end": 31, "lemma": "explosion", "gold_cluster": "g1"},
    ]
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")
    return str(path)


def _export(checkpoint, mentions_file, out_path, **kw):
    req = ExportRequest(checkpoint=checkpoint, input_path=mentions_file,
                        output_path=str(out_path), **kw)
    return run_export(req)


class TestExport:
    def test_vectors_are_768_dimensional(self, checkpoint, mentions_file, tmp_path):
        out = tmp_path / "emb.jsonl"
        report = _export(checkpoint, mentions_file, out)
        lines = out.read_text(encoding="utf-8").splitlines()
        header = json.loads(lines[0])
        assert header["dim"] == 768
        assert report.dim == 768
        for line in lines[1:]:
            assert len(json.loads(line)["vector"]) == 768

    def test_output_passes_primary_cli_validate(self, checkpoint, mentions_file, tmp_path):
        out = tmp_path / "emb.jsonl"
        _export(checkpoint, mentions_file, out)
        config = tmp_path / "config.yaml"
        config.write_text(
            "seed: 1\nstages: []\ninputs:\n"
            f"  mentions: {mentions_file}\n  embeddings: {out}\n",
            encoding="utf-8")
        proc = subprocess.run(
            [sys.executable, "-m", "phonocoref.cli", "validate",
             "--config", str(config)],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.strip() == "ok"

    def test_deterministic_across_runs(self, checkpoint, mentions_file, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        _export(checkpoint, mentions_file, a)
        _export(checkpoint, mentions_file, b)
        assert a.read_bytes() == b.read_bytes()

    def test_single_token_span_equals_token_embedding(self, checkpoint, tmp_path):
        from transformers import AutoModel, AutoTokenizer

        mention = {"mention_id": "solo", "doc_id": "d",
                   "sentence": "the attack began", "span_start": 4, "span_end": 10,
                   "lemma": "attack", "gold_cluster": "g"}
        path = tmp_path / "one.jsonl"
        path.write_text(json.dumps(mention) + "\n", encoding="utf-8")
        out = tmp_path / "emb.jsonl"
        _export(checkpoint, str(path), out)
        span_vec = None
        for line in out.read_text(encoding="utf-8").splitlines()[1:]:
            rec = json.loads(line)
            if rec["role"] == "span":
                span_vec = np.array(rec["vector"])
        assert span_vec is not None

        # independent forward pass: [CLS] the <m> attack </m> began [SEP];
        # trigger tokens get the same deterministic mean-embedding init
        tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        old = len(tokenizer)
        tokenizer.add_tokens(["<m>", "</m>"])
        model = AutoModel.from_pretrained(checkpoint)
        model.resize_token_embeddings(len(tokenizer))
        with torch.no_grad():
            emb = model.get_input_embeddings().weight
            emb[old:] = emb[:old].mean(dim=0)
        model.eval()
        tokens = ["[CLS]", "the", "<m>", "attack", "</m>", "began", "[SEP]"]
        assert len(tokenizer.tokenize("attack")) == 1
        ids = torch.tensor([tokenizer.convert_tokens_to_ids(tokens)])
        with torch.no_grad():
            hidden = model(input_ids=ids,
                           attention_mask=torch.ones_like(ids)).last_hidden_state
        token_vec = hidden[0, 3].numpy()
        assert np.allclose(span_vec, token_vec, atol=1e-5)

    def test_trigger_tokens_added_with_warning(self, checkpoint, mentions_file, tmp_path):
        with pytest.warns(UserWarning, match="trigger tokens"):
            report = _export(checkpoint, mentions_file, tmp_path / "emb.jsonl")
        assert report.added_trigger_tokens

    def test_truncated_span_flagged_not_dropped(self, checkpoint, tmp_path):
        long_prefix = "the " * 100
        sentence = long_prefix + "attack began"
        mention = {"mention_id": "far", "doc_id": "d", "sentence": sentence,
                   "span_start": len(long_prefix), "span_end": len(long_prefix) + 6,
                   "lemma": "attack", "gold_cluster": "g"}
        path = tmp_path / "far.jsonl"
        path.write_text(json.dumps(mention) + "\n", encoding="utf-8")
        out = tmp_path / "emb.jsonl"
        report = _export(checkpoint, str(path), out, max_len=32)
        assert report.truncated == ["far"]
        recs = [json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()[1:]]
        span = [r for r in recs if r["role"] == "span"][0]
        assert span.get("truncated") is True

    def test_raw_pooled_mode_differs_from_pooler(self, pooled_checkpoint,
                                                 mentions_file, tmp_path):
        a, b = tmp_path / "pooler.jsonl", tmp_path / "raw.jsonl"
        _export(pooled_checkpoint, mentions_file, a, pooled="pooler")
        _export(pooled_checkpoint, mentions_file, b, pooled="raw")
        cls_a = json.loads(a.read_text(encoding="utf-8").splitlines()[1])
        cls_b = json.loads(b.read_text(encoding="utf-8").splitlines()[1])
        assert cls_a["role"] == cls_b["role"] == "cls"
        assert not np.allclose(cls_a["vector"], cls_b["vector"])

    def test_missing_pooler_falls_back_to_raw_with_warning(self, checkpoint,
                                                           mentions_file, tmp_path):
        with pytest.warns(UserWarning, match="no trained pooler"):
            _export(checkpoint, mentions_file, tmp_path / "emb.jsonl")

    def test_pooler_checkpoint_deterministic(self, pooled_checkpoint,
                                             mentions_file, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        _export(pooled_checkpoint, mentions_file, a)
        _export(pooled_checkpoint, mentions_file, b)
        assert a.read_bytes() == b.read_bytes()


class TestCli:
    def test_cli_export(self, checkpoint, mentions_file, tmp_path):
        out = tmp_path / "emb.jsonl"
        proc = subprocess.run(
            [sys.executable, "-m", "phonocoref_exporter.cli",
             "--checkpoint", checkpoint, "--input", mentions_file,
             "--out", str(out), "--max-len", "128"],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert out.exists()
        assert "dim 768" in proc.stdout
