import json
import math

import numpy as np
import pytest
import yaml
from click.testing import CliRunner
from fastapi.testclient import TestClient

from fixtures import make_anisotropic_sets, make_mentions, mention_embeddings_jsonl
from phonocoref import formats
from phonocoref.cli import main as cli_main
from phonocoref.service import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def _set_payload(s):
    rec = {"set_id": s.set_id, "q": s.q.tolist(), "candidates": s.candidates.tolist(),
           "cls": s.cls.tolist(), "gold": s.gold}
    if s.phon is not None:
        rec["phon"] = s.phon.tolist()
    return rec


class TestServiceEndpoints:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"

    def test_transliterate(self, client):
        r = client.post("/phon/transliterate", json={"text": "অসমীয়া"})
        assert "".join(r.json()["segments"]) == "ɔxɔmija"

    def test_featurize_with_padding(self, client):
        r = client.post("/phon/featurize", json={"text": "অ", "pad_len": 3}).json()
        assert len(r["rows"]) == 1
        assert len(r["padded"]) == 72

    def test_strict_transliteration_maps_to_400(self, client):
        r = client.post("/phon/transliterate", json={"text": "অX", "strict": True})
        assert r.status_code == 400
        assert r.json()["error"] == "UnknownCharacterError"

    def test_losses(self, client):
        assert client.post("/disperse/loss/bce",
                           json={"preds": [0.5], "labels": [1]}).json()["value"] \
            == pytest.approx(math.log(2))
        assert client.post("/disperse/loss/combined",
                           json={"l_bce": math.log(2), "l_cos": 0.3,
                                 "alpha": 0.01}).json()["value"] \
            == pytest.approx(0.01 * math.log(2) + 0.3)

    def test_train_infer_roundtrip(self, client):
        sets = make_anisotropic_sets(30, dim=8, seed=21)
        payload = [_set_payload(s) for s in sets]
        r = client.post("/disperse/train", json={
            "sets": payload,
            "config": {"epochs": 300, "seed": 5, "lr_head": 0.1, "lr_embed": 0.1}})
        assert r.status_code == 200
        params = r.json()
        r2 = client.post("/disperse/infer", json={
            "params": params, "sets": payload, "threshold": 4.45})
        choices = r2.json()["choices"]
        acc = np.mean([choices[s.set_id] == s.gold for s in sets])
        assert acc > 0.8

    def test_gradient_check_endpoint(self, client):
        sets = make_anisotropic_sets(4, dim=4, seed=22)
        params = client.post("/disperse/train", json={
            "sets": [_set_payload(s) for s in sets],
            "config": {"epochs": 2, "seed": 1}}).json()
        r = client.post("/disperse/gradient-check", json={
            "params": params, "set": _set_payload(sets[0]), "epsilon": 1e-5})
        body = r.json()
        assert body["max_rel_error"] < 1e-4
        assert set(body["by_layer"]) == {"w_head", "b_head", "w_cos", "b_cos",
                                         "w_disc", "b_disc"}

    def test_aniso_report(self, client):
        sets = make_anisotropic_sets(10, dim=6, seed=23)
        r = client.post("/aniso/report", json={
            "sets": [_set_payload(s) for s in sets], "mode": "within", "bins": 5})
        body = r.json()
        assert body["n_values"] == 60
        assert body["stats"]["mean"] > 0.99
        assert sum(row["count"] for row in body["histogram"]) == 60

    def test_coref_flow(self, client):
        mentions = make_mentions(n_clusters=3, per_cluster=3, seed=31)
        mention_payload = [{
            "mention_id": m.mention_id, "doc_id": m.doc_id, "sentence": m.sentence,
            "span_start": m.span_start, "span_end": m.span_end, "lemma": m.lemma,
            "gold_cluster": m.gold_cluster, "topic": m.topic} for m in mentions]
        emb_text = mention_embeddings_jsonl(mentions, dim=6, seed=32)
        pairs = client.post("/coref/pairs", json={
            "mentions": mention_payload, "embeddings_jsonl": emb_text}).json()["pairs"]
        assert len(pairs) == 9 * 8 // 2
        assert all(p["features"] is not None for p in pairs)
        params = client.post("/coref/train", json={
            "features": [p["features"] for p in pairs],
            "labels": [p["label"] for p in pairs], "epochs": 30, "lr": 1.0}).json()
        scored = client.post("/coref/score", json={
            "params": params,
            "pairs": [{k: p[k] for k in ("a", "b", "label", "features")}
                      for p in pairs]}).json()["pairs"]
        clusters = client.post("/coref/cluster", json={
            "pairs": scored, "threshold": "mean",
            "mention_ids": [m.mention_id for m in mentions]}).json()
        assert sum(len(v) for v in clusters["clusters"].values()) == 9
        dr = client.post("/coref/diff-rate", json={
            "pairs": [p for p in scored if p["affinity"] > clusters["threshold"]],
            "lemmas": {m.mention_id: m.lemma for m in mentions}}).json()
        assert dr["l1"] + dr["l2"] == dr["tp"]

    def test_eval_endpoint_table(self, client):
        r = client.post("/coref/eval", json={
            "key": {"g0": ["a", "b", "c"]}, "response": {"c0": ["a", "b"], "c1": ["c"]}})
        body = r.json()
        assert body["muc"]["f1"] == pytest.approx(2 / 3)
        assert body["conll_f1"] == pytest.approx((2 / 3 + 5 / 7 + 8 / 15) / 3)
        assert "BCUB" in body["table"]

    def test_eval_strict_mismatch_maps_to_400(self, client):
        r = client.post("/coref/eval", json={
            "key": {"g0": ["a"]}, "response": {"c0": ["b"]}, "strict": True})
        assert r.status_code == 400


@pytest.fixture
def cli_corpus(tmp_path):
    mentions = make_mentions(n_clusters=3, per_cluster=3, lemma_noise=1, seed=41)
    with open(tmp_path / "mentions.jsonl", "w", encoding="utf-8") as fh:
        formats.write_mentions(mentions, fh)
    (tmp_path / "emb.jsonl").write_text(
        mention_embeddings_jsonl(mentions, dim=6, seed=42), encoding="utf-8")
    sets = make_anisotropic_sets(20, dim=8, seed=43)
    with open(tmp_path / "sets.jsonl", "w", encoding="utf-8") as fh:
        formats.write_sets(sets, fh)
    (tmp_path / "text.txt").write_text("অসমীয়া\nছিঙ্গাপুৰ\n", encoding="utf-8")
    config = {"seed": 7, "outdir": "out",
              "inputs": {"sets": "sets.jsonl", "mentions": "mentions.jsonl",
                         "embeddings": "emb.jsonl"},
              "stages": ["aniso", "disperse", "coref", "eval"],
              "disperser": {"epochs": 5}, "coref": {"threshold": "mean"}}
    (tmp_path / "config.yaml").write_text(yaml.safe_dump(config), encoding="utf-8")
    return tmp_path


def run_cli(*args):
    return CliRunner().invoke(cli_main, list(args), catch_exceptions=False)


class TestCli:
    def test_phon_translit(self, cli_corpus):
        r = run_cli("phon", "translit", str(cli_corpus / "text.txt"))
        assert r.exit_code == 0
        assert r.output.splitlines()[0] == "ɔ x ɔ m i j a"

    def test_phon_featurize(self, cli_corpus):
        out = cli_corpus / "feat.jsonl"
        r = run_cli("phon", "featurize", str(cli_corpus / "text.txt"),
                    "--pad-len", "12", "--out", str(out))
        assert r.exit_code == 0
        rows = [json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()]
        assert len(rows) == 2
        assert len(rows[0]["values"]) == 12 * 24

    def test_phon_max_pad_length(self, cli_corpus):
        r = run_cli("phon", "max-pad-length", str(cli_corpus / "text.txt"))
        assert r.exit_code == 0
        assert r.output.strip() == "8"  # siŋgapuɹ

    def test_disperse_train_and_infer(self, cli_corpus):
        params = cli_corpus / "params.json"
        r = run_cli("disperse", "train", "--sets", str(cli_corpus / "sets.jsonl"),
                    "--epochs", "40", "--seed", "3", "--out", str(params))
        assert r.exit_code == 0, r.output
        assert params.exists()
        r2 = run_cli("disperse", "infer", "--params", str(params),
                     "--sets", str(cli_corpus / "sets.jsonl"),
                     "--threshold", "4.45")
        assert r2.exit_code == 0
        assert "accuracy" in r2.output

    def test_aniso_report(self, cli_corpus):
        stats = cli_corpus / "stats.json"
        hist = cli_corpus / "hist.csv"
        r = run_cli("aniso", "report", "--sets", str(cli_corpus / "sets.jsonl"),
                    "--mode", "within", "--out", str(stats), "--hist", str(hist))
        assert r.exit_code == 0
        body = json.loads(stats.read_text(encoding="utf-8"))
        assert body["mean"] > 0.99
        assert hist.read_text(encoding="utf-8").startswith("bin_left")

    def test_coref_pipeline_commands(self, cli_corpus):
        base = cli_corpus
        r = run_cli("coref", "pairs", "--mentions", str(base / "mentions.jsonl"),
                    "--embeddings", str(base / "emb.jsonl"),
                    "--out", str(base / "pairs.jsonl"))
        assert r.exit_code == 0, r.output
        r = run_cli("coref", "train", "--pairs", str(base / "pairs.jsonl"),
                    "--epochs", "30", "--lr", "1.0",
                    "--out", str(base / "scorer.json"))
        assert r.exit_code == 0, r.output
        r = run_cli("coref", "score", "--params", str(base / "scorer.json"),
                    "--pairs", str(base / "pairs.jsonl"),
                    "--out", str(base / "scored.jsonl"))
        assert r.exit_code == 0, r.output
        r = run_cli("coref", "cluster", "--pairs", str(base / "scored.jsonl"),
                    "--threshold", "mean", "--mentions", str(base / "mentions.jsonl"),
                    "--out", str(base / "clusters.json"))
        assert r.exit_code == 0, r.output
        r = run_cli("coref", "lemma-baseline", "--mentions", str(base / "mentions.jsonl"),
                    "--out", str(base / "lemma.json"))
        assert r.exit_code == 0, r.output
        r = run_cli("coref", "diff-rate", "--pairs", str(base / "scored.jsonl"),
                    "--mentions", str(base / "mentions.jsonl"), "--threshold", "0")
        assert r.exit_code == 0, r.output
        assert "diff-rate" in r.output

        # build the gold clustering file and evaluate
        from phonocoref.coref import clustering_to_chains, gold_clustering
        mentions = formats.read_mentions(base / "mentions.jsonl")
        gold = clustering_to_chains(gold_clustering(mentions))
        (base / "gold.json").write_text(json.dumps(gold), encoding="utf-8")
        r = run_cli("coref", "eval", "--key", str(base / "gold.json"),
                    "--response", str(base / "clusters.json"))
        assert r.exit_code == 0, r.output
        assert "C-F1" in r.output

    def test_validate_ok_and_failure_exit_codes(self, cli_corpus):
        r = run_cli("validate", "--config", str(cli_corpus / "config.yaml"))
        assert r.exit_code == 0
        bad = dict(yaml.safe_load((cli_corpus / "config.yaml").read_text(encoding="utf-8")))
        bad["inputs"] = {"sets": "missing.jsonl"}
        bad["stages"] = ["aniso"]
        (cli_corpus / "bad.yaml").write_text(yaml.safe_dump(bad), encoding="utf-8")
        r = run_cli("validate", "--config", str(cli_corpus / "bad.yaml"))
        assert r.exit_code == 1

    def test_run_writes_artifacts_and_identical_rerun(self, cli_corpus, monkeypatch):
        monkeypatch.chdir(cli_corpus)
        r = run_cli("run", "--config", str(cli_corpus / "config.yaml"),
                    "--outdir", "out")
        assert r.exit_code == 0, r.output
        report = cli_corpus / "out" / "metric_report.json"
        assert report.exists()
        first = report.read_bytes()
        r = run_cli("run", "--config", str(cli_corpus / "config.yaml"),
                    "--outdir", "out")
        assert r.exit_code == 0
        assert report.read_bytes() == first

    def test_run_stage_failure_exit_2_with_stale_marker(self, cli_corpus, monkeypatch):
        monkeypatch.chdir(cli_corpus)
        cfg = yaml.safe_load((cli_corpus / "config.yaml").read_text(encoding="utf-8"))
        cfg["disperser"] = {"epochs": 5, "lr_head": 1e200, "lr_embed": 1e200}
        (cli_corpus / "broken.yaml").write_text(yaml.safe_dump(cfg), encoding="utf-8")
        with np.errstate(all="ignore"):
            r = CliRunner().invoke(cli_main, ["run", "--config",
                                              str(cli_corpus / "broken.yaml"),
                                              "--outdir", "bad_out"])
        assert r.exit_code == 2
        assert (cli_corpus / "bad_out" / ".stale").exists()
