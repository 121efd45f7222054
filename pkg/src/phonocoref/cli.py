"""Command-line interface: a thin client over the HTTP service.

By default every command talks to an in-process instance of the FastAPI app,
so no server needs to be running; ``--server http://host:port`` targets a
remote instance instead (start one with ``phonocoref serve``).

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx


class _InProcessTransport(httpx.BaseTransport):
    """Synchronous bridge to the ASGI app, so the CLI works with no server."""

    def __init__(self, app):
        self._asgi = httpx.ASGITransport(app=app)

    def handle_request(self, request):
        import asyncio

        async def _roundtrip():
            response = await self._asgi.handle_async_request(request)
            body = await response.aread()
            return httpx.Response(response.status_code, headers=response.headers,
                                  content=body, request=request)

        return asyncio.run(_roundtrip())


class ServiceClient:
    def __init__(self, server=None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=600.0)
        else:
            from .service import create_app
            self._client = httpx.Client(
                transport=_InProcessTransport(create_app()),
                base_url="http://phonocoref.internal", timeout=600.0)

    def post(self, path, payload):
        resp = self._client.post(path, json=payload)
        if resp.status_code >= 500:
            _fail(resp, code=2)
        if resp.status_code >= 400:
            _fail(resp, code=1)
        return resp.json()


def _fail(resp, code):
    try:
        detail = resp.json()
    except json.JSONDecodeError:
        detail = {"detail": resp.text}
    click.echo(f"error ({resp.status_code}): {json.dumps(detail, indent=2)}", err=True)
    sys.exit(code)


def _dump_json(path, payload):
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def _read_jsonl(path):
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rec = json.loads(line)
            if "_meta" not in rec:
                out.append(rec)
    return out


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Remote service URL; default runs the service in-process.")
@click.pass_context
def main(ctx, server):
    """Phonology, embedding dispersal, anisotropy and event coreference."""
    ctx.obj = ServiceClient(server)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn
    uvicorn.run("phonocoref.service:app", host=host, port=port)


# ---------------------------------------------------------------------------
# phon
# ---------------------------------------------------------------------------

@main.group()
def phon():
    """Grapheme-to-phoneme and articulatory features."""


@phon.command("translit")
@click.argument("file", type=click.Path(exists=True))
@click.option("--strict", is_flag=True, help="Error on unknown characters.")
@click.option("--out", type=click.Path(), default=None)
@click.pass_obj
def phon_translit(client, file, strict, out):
    """Transliterate each line of FILE to IPA segments."""
    lines = Path(file).read_text(encoding="utf-8").splitlines()
    results = []
    skipped = 0
    for line in lines:
        r = client.post("/phon/transliterate", {"text": line, "strict": strict})
        results.append(" ".join(r["segments"]))
        skipped += r["skipped"]
    text = "\n".join(results) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)
    if skipped:
        click.echo(f"warning: skipped {skipped} unmapped characters", err=True)


@phon.command("featurize")
@click.argument("file", type=click.Path(exists=True))
@click.option("--pad-len", type=int, required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--strict", is_flag=True)
@click.pass_obj
def phon_featurize(client, file, pad_len, out, strict):
    """Write padded articulatory feature vectors for each line of FILE."""
    lines = Path(file).read_text(encoding="utf-8").splitlines()
    with open(out, "w", encoding="utf-8") as fh:
        for i, line in enumerate(lines):
            r = client.post("/phon/featurize",
                            {"text": line, "pad_len": pad_len, "strict": strict})
            fh.write(json.dumps({"line": i, "segments": r["segments"],
                                 "values": r["padded"]},
                                sort_keys=True, separators=(",", ":")) + "\n")
    click.echo(f"wrote {len(lines)} records to {out}")


@phon.command("max-pad-length")
@click.argument("files", nargs=-1, type=click.Path(exists=True), required=True)
@click.option("--strict", is_flag=True)
@click.pass_obj
def phon_max_pad_length(client, files, strict):
    """Longest segment count over all lines of all FILES."""
    corpora = [Path(f).read_text(encoding="utf-8").splitlines() for f in files]
    r = client.post("/phon/max-pad-length", {"corpora": corpora, "strict": strict})
    click.echo(r["value"])


# ---------------------------------------------------------------------------
# disperse
# ---------------------------------------------------------------------------

@main.group()
def disperse():
    """Embedding disperser training and inference."""


@disperse.command("train")
@click.option("--sets", "sets_path", type=click.Path(exists=True), required=True)
@click.option("--alpha", default=0.01, show_default=True,
              help="Weight of the BCE term in the combined loss.")
@click.option("--margin", default=0.5, show_default=True)
@click.option("--epochs", default=30, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--lr-head", default=0.1, show_default=True)
@click.option("--lr-embed", default=0.1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--no-center", is_flag=True,
              help="Skip input centering (folded into biases by default).")
@click.option("--out", type=click.Path(), required=True)
@click.pass_obj
def disperse_train(client, sets_path, alpha, margin, epochs, batch_size,
                   lr_head, lr_embed, seed, no_center, out):
    sets = _read_jsonl(sets_path)
    cfg = {"alpha": alpha, "margin": margin, "epochs": epochs,
           "batch_size": batch_size, "lr_head": lr_head, "lr_embed": lr_embed,
           "seed": seed, "center": not no_center}
    r = client.post("/disperse/train", {"sets": sets, "config": cfg})
    _dump_json(out, r)
    click.echo(f"trained on {len(sets)} sets -> {out}")


@disperse.command("infer")
@click.option("--params", "params_path", type=click.Path(exists=True), required=True)
@click.option("--sets", "sets_path", type=click.Path(exists=True), required=True)
@click.option("--threshold", default=4.45, show_default=True,
              help="Euclidean distance threshold of the decision rule.")
@click.option("--out", type=click.Path(), default=None)
@click.pass_obj
def disperse_infer(client, params_path, sets_path, threshold, out):
    params = json.loads(Path(params_path).read_text(encoding="utf-8"))
    params = {"layers": params["layers"], "config": params["config"]}
    sets = _read_jsonl(sets_path)
    r = client.post("/disperse/infer",
                    {"params": params, "sets": sets, "threshold": threshold})
    golds = {s["set_id"]: s["gold"] for s in sets}
    correct = sum(1 for sid, c in r["choices"].items() if golds.get(sid) == c)
    payload = {"threshold": threshold, "choices": r["choices"],
               "accuracy": correct / len(sets) if sets else 0.0}
    if out:
        _dump_json(out, payload)
    click.echo(f"accuracy {payload['accuracy']:.4f} over {len(sets)} sets")


# ---------------------------------------------------------------------------
# aniso
# ---------------------------------------------------------------------------

@main.group()
def aniso():
    """Embedding-space anisotropy diagnostics."""


@aniso.command("report")
@click.option("--sets", "sets_path", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["within", "beyond"]), default="within",
              show_default=True)
@click.option("--sample", default=100, show_default=True,
              help="Number of beyond-set draws.")
@click.option("--seed", default=0, show_default=True)
@click.option("--combine", type=click.Choice(["cls", "sum"]), default="cls",
              show_default=True)
@click.option("--bins", default=20, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--hist", type=click.Path(), default=None)
@click.pass_obj
def aniso_report(client, sets_path, mode, sample, seed, combine, bins, out, hist):
    sets = _read_jsonl(sets_path)
    r = client.post("/aniso/report", {"sets": sets, "mode": mode, "sample": sample,
                                      "seed": seed, "combine": combine, "bins": bins})
    _dump_json(out, {"mode": mode, "combine": combine,
                     "n_values": r["n_values"], **r["stats"]})
    if hist:
        lines = ["bin_left,bin_right,count"]
        lines += [f"{row['bin_left']!r},{row['bin_right']!r},{row['count']}"
                  for row in r["histogram"]]
        Path(hist).write_text("\n".join(lines) + "\n", encoding="utf-8")
    s = r["stats"]
    label = f"{mode}-set"
    width = max(12, len(label) + 2)
    click.echo(" " * 10 + f"{label:>{width}}")
    for row_name, key in (("Mean", "mean"), ("Variance", "variance"),
                          ("Stdev", "stdev"), ("Min", "min")):
        click.echo(f"{row_name:<10}{s[key]:>{width}.6g}")


# ---------------------------------------------------------------------------
# coref
# ---------------------------------------------------------------------------

@main.group()
def coref():
    """Cross-document event coreference."""


@coref.command("pairs")
@click.option("--mentions", "mentions_path", type=click.Path(exists=True), required=True)
@click.option("--embeddings", "embeddings_path", type=click.Path(exists=True),
              default=None, help="Attach pair feature vectors from this file.")
@click.option("--topic-filter", is_flag=True,
              help="Only pair mentions sharing a topic.")
@click.option("--out", type=click.Path(), required=True)
@click.pass_obj
def coref_pairs(client, mentions_path, embeddings_path, topic_filter, out):
    mentions = _read_jsonl(mentions_path)
    payload = {"mentions": mentions, "topic_filter": topic_filter}
    if embeddings_path:
        payload["embeddings_jsonl"] = Path(embeddings_path).read_text(encoding="utf-8")
    r = client.post("/coref/pairs", payload)
    with open(out, "w", encoding="utf-8") as fh:
        for p in r["pairs"]:
            rec = {"a": p["a"], "b": p["b"], "label": p["label"],
                   "affinity": p["affinity"]}
            if p.get("features") is not None:
                rec["features"] = p["features"]
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
    click.echo(f"wrote {len(r['pairs'])} pairs to {out}")


@coref.command("train")
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True,
              help="Pairs JSONL with feature vectors (coref pairs --embeddings).")
@click.option("--epochs", default=10, show_default=True)
@click.option("--lr", default=0.5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.pass_obj
def coref_train(client, pairs_path, epochs, lr, seed, out):
    pairs = _read_jsonl(pairs_path)
    missing = [p for p in pairs if p.get("features") is None]
    if missing:
        click.echo("error: pairs file lacks feature vectors", err=True)
        sys.exit(1)
    r = client.post("/coref/train", {
        "features": [p["features"] for p in pairs],
        "labels": [p["label"] for p in pairs],
        "epochs": epochs, "lr": lr, "seed": seed})
    _dump_json(out, r)
    click.echo(f"trained scorer on {len(pairs)} pairs -> {out}")


@coref.command("score")
@click.option("--params", "params_path", type=click.Path(exists=True), required=True)
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.pass_obj
def coref_score(client, params_path, pairs_path, out):
    """Fill raw-logit affinities (the thresholds in --help are on this scale)."""
    params = json.loads(Path(params_path).read_text(encoding="utf-8"))
    pairs = _read_jsonl(pairs_path)
    r = client.post("/coref/score", {"params": params, "pairs": pairs})
    with open(out, "w", encoding="utf-8") as fh:
        for p in r["pairs"]:
            fh.write(json.dumps({"a": p["a"], "b": p["b"], "label": p["label"],
                                 "affinity": p["affinity"]},
                                sort_keys=True, separators=(",", ":")) + "\n")
    click.echo(f"scored {len(r['pairs'])} pairs -> {out}")


@coref.command("cluster")
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True)
@click.option("--threshold", default="7.0", show_default=True,
              help="Raw-logit affinity threshold, or 'mean' for the mean of "
                   "all affinities (edges need affinity strictly above it).")
@click.option("--mentions", "mentions_path", type=click.Path(exists=True), default=None,
              help="Ensures unlinked mentions appear as singletons.")
@click.option("--out", type=click.Path(), required=True)
@click.pass_obj
def coref_cluster(client, pairs_path, threshold, mentions_path, out):
    pairs = _read_jsonl(pairs_path)
    mention_ids = []
    if mentions_path:
        mention_ids = [m["mention_id"] for m in _read_jsonl(mentions_path)]
    thr = threshold if threshold == "mean" else float(threshold)
    r = client.post("/coref/cluster", {"pairs": pairs, "threshold": thr,
                                       "mention_ids": mention_ids})
    _dump_json(out, r["clusters"])
    click.echo(f"{len(r['clusters'])} clusters at threshold {r['threshold']:.4g} -> {out}")


@coref.command("lemma-baseline")
@click.option("--mentions", "mentions_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.pass_obj
def coref_lemma_baseline(client, mentions_path, out):
    mentions = _read_jsonl(mentions_path)
    r = client.post("/coref/lemma-baseline", {"mentions": mentions})
    _dump_json(out, r["clusters"])
    click.echo(f"{len(r['clusters'])} lemma clusters -> {out}")


@coref.command("diff-rate")
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True,
              help="Scored pairs JSONL with gold labels.")
@click.option("--mentions", "mentions_path", type=click.Path(exists=True), required=True)
@click.option("--threshold", type=float, required=True,
              help="Pairs above this affinity count as predicted positive.")
@click.option("--out", type=click.Path(), default=None)
@click.pass_obj
def coref_diff_rate(client, pairs_path, mentions_path, threshold, out):
    pairs = [p for p in _read_jsonl(pairs_path)
             if p.get("affinity") is not None and p["affinity"] > threshold]
    lemmas = {m["mention_id"]: m["lemma"] for m in _read_jsonl(mentions_path)}
    r = client.post("/coref/diff-rate", {"pairs": pairs, "lemmas": lemmas})
    if out:
        _dump_json(out, r)
    click.echo(f"TP {r['tp']}  L1 {r['l1']}  L2 {r['l2']}  "
               f"diff-rate {r['diff_rate']:.3f}"
               + ("  (no true positives)" if r["undefined"] else ""))


@coref.command("eval")
@click.option("--key", "key_path", type=click.Path(exists=True), required=True)
@click.option("--response", "response_path", type=click.Path(exists=True), required=True)
@click.option("--strict", is_flag=True,
              help="Error when key and response cover different mentions.")
@click.option("--out", type=click.Path(), default=None)
@click.pass_obj
def coref_eval(client, key_path, response_path, strict, out):
    """Score a response clustering against a key with MUC, B3, CEAF-e, BLANC."""
    def load_clusters(path):
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return {cid: ms for cid, ms in payload.items() if cid != "_meta"}

    r = client.post("/coref/eval", {"key": load_clusters(key_path),
                                    "response": load_clusters(response_path),
                                    "strict": strict})
    if out:
        _dump_json(out, {k: r[k] for k in ("muc", "b_cubed", "ceaf_e", "blanc", "conll_f1")})
    click.echo(r["table"], nl=False)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def _pipeline_payload(config_path):
    import yaml

    base = Path(config_path).parent
    config = yaml.safe_load(Path(config_path).read_text(encoding="utf-8"))
    if not isinstance(config, dict):
        click.echo("error: config must be a mapping", err=True)
        sys.exit(1)
    files = {}
    inputs = dict(config.get("inputs") or {})
    for key, rel in inputs.items():
        p = Path(rel)
        p = p if p.is_absolute() else base / p
        if p.exists():
            name = f"{key}{p.suffix or '.dat'}"
            files[name] = p.read_text(encoding="utf-8")
            inputs[key] = name
    config["inputs"] = inputs
    return config, files


@main.command("validate")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.pass_obj
def validate_cmd(client, config_path):
    """Validate a pipeline config and its referenced files."""
    config, files = _pipeline_payload(config_path)
    r = client.post("/pipeline/validate", {"config": config, "files": files})
    if r["failures"]:
        for f in r["failures"]:
            click.echo(f"{f['file']}:{f['line']}: {f['message']}", err=True)
        sys.exit(1)
    click.echo("ok")


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--outdir", type=click.Path(), default=None,
              help="Override the config outdir for the local artifacts.")
@click.pass_obj
def run_cmd(client, config_path, outdir):
    """Run the configured pipeline stages and write artifacts locally."""
    config, files = _pipeline_payload(config_path)
    outdir = Path(outdir or config.get("outdir", "out"))
    resp = client._client.post("/pipeline/run", json={"config": config, "files": files})
    if resp.status_code == 422:
        _fail(resp, code=1)
    if resp.status_code >= 400:
        outdir.mkdir(parents=True, exist_ok=True)
        try:
            detail = resp.json().get("detail", {})
        except json.JSONDecodeError:
            detail = {}
        stale = detail.get("stale") if isinstance(detail, dict) else None
        (outdir / ".stale").write_text(stale or json.dumps({"failed": True}) + "\n",
                                       encoding="utf-8")
        _fail(resp, code=2)
    r = resp.json()
    outdir.mkdir(parents=True, exist_ok=True)
    for name, content in r["artifacts"].items():
        (outdir / name).write_text(content, encoding="utf-8")
    click.echo(f"config hash {r['config_hash'][:12]}; "
               f"{len(r['artifacts'])} artifacts in {outdir}")


if __name__ == "__main__":
    main()
