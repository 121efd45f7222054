"""Experiment orchestration: validate a config, run the configured stages in
order, and write artifacts that embed the config hash and toolkit version.

Stages operate on files under the config's directories and are deterministic:
rerunning with identical config and inputs produces byte-identical outputs.
All stage randomness derives from the single config seed through named
sub-seeds.  On a stage failure the artifacts written so far are listed in a
``.stale`` marker inside the output directory.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import yaml

from . import anisotropy, coref, disperser, formats, metrics
from .errors import PipelineStageError, ValidationError
from .formats import Failure

DEFAULT_STAGES = ("aniso", "disperse", "coref", "eval")


def sub_seed(seed, name):
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ValidationError([Failure(str(path), 0, "config must be a mapping")])
    return cfg


def _resolve(base, rel):
    p = Path(rel)
    return p if p.is_absolute() else Path(base) / p


def validate(config, base_dir="."):
    """Itemized validation of a config dict and the files it references."""
    failures = []
    if "seed" not in config:
        failures.append(Failure("config", 0, "seed is mandatory"))
    stages = config.get("stages", list(DEFAULT_STAGES))
    unknown = [s for s in stages if s not in DEFAULT_STAGES]
    if unknown:
        failures.append(Failure("config", 0, f"unknown stages {unknown}"))
    inputs = config.get("inputs", {})

    sets_path = inputs.get("sets")
    needs_sets = any(s in stages for s in ("aniso", "disperse"))
    if needs_sets and not sets_path:
        failures.append(Failure("config", 0, "inputs.sets required for aniso/disperse stages"))
    if sets_path:
        p = _resolve(base_dir, sets_path)
        if not p.exists():
            failures.append(Failure(str(p), 0, "file does not exist"))
        else:
            failures.extend(formats.validate_sets(p))

    mentions_path = inputs.get("mentions")
    embeddings_path = inputs.get("embeddings")
    needs_coref = any(s in stages for s in ("coref", "eval"))
    if needs_coref and not mentions_path:
        failures.append(Failure("config", 0, "inputs.mentions required for coref/eval stages"))
    if mentions_path:
        p = _resolve(base_dir, mentions_path)
        if not p.exists():
            failures.append(Failure(str(p), 0, "file does not exist"))
        else:
            failures.extend(formats.validate_mentions(p))
    if "coref" in stages and not embeddings_path:
        failures.append(Failure("config", 0, "inputs.embeddings required for the coref stage"))
    if embeddings_path:
        p = _resolve(base_dir, embeddings_path)
        if not p.exists():
            failures.append(Failure(str(p), 0, "file does not exist"))
        else:
            failures.extend(formats.validate_embeddings(p))
            mp = _resolve(base_dir, mentions_path) if mentions_path else None
            if mp is not None and mp.exists():
                failures.extend(formats.cross_reference_failures(mp, p))
    return failures


def _input_digests(config, base_dir):
    digests = {}
    for key, rel in sorted((config.get("inputs") or {}).items()):
        p = _resolve(base_dir, rel)
        digests[key] = formats.file_digest(p.read_bytes()) if p.exists() else None
    return digests


def compute_config_hash(config, base_dir="."):
    # the output location does not influence artifact content
    hashed = {k: v for k, v in config.items() if k != "outdir"}
    return formats.config_hash(hashed, _input_digests(config, base_dir))


def _dump_json(path, payload):
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def run_pipeline(config, base_dir="."):
    """Execute the configured stages; returns {artifact name: path}."""
    problems = validate(config, base_dir)
    if problems:
        raise ValidationError(problems)

    outdir = _resolve(base_dir, config.get("outdir", "out"))
    outdir.mkdir(parents=True, exist_ok=True)
    stale_marker = outdir / ".stale"
    if stale_marker.exists():
        stale_marker.unlink()

    cfg_hash = compute_config_hash(config, base_dir)
    meta = formats.meta_block(cfg_hash)
    seed = config["seed"]
    stages = config.get("stages", list(DEFAULT_STAGES))
    inputs = config.get("inputs", {})
    artifacts = {}

    def run_stage(name, fn):
        try:
            fn()
        except Exception as exc:
            stale_marker.write_text(
                json.dumps({"failed_stage": name, "stale": sorted(artifacts)},
                           sort_keys=True, indent=2) + "\n",
                encoding="utf-8")
            raise PipelineStageError(name, exc) from exc

    # ---- anisotropy report -------------------------------------------------
    def stage_aniso():
        opts = config.get("anisotropy", {})
        sets = formats.read_sets(_resolve(base_dir, inputs["sets"]))
        mode = opts.get("mode", "within")
        combine = opts.get("combine", "cls")
        if mode == "within":
            values = [v for s in sets for v in anisotropy.within_set_similarities(s, combine)]
        else:
            values = anisotropy.beyond_set_similarities(
                sets, sample_n=opts.get("sample", 100),
                seed=sub_seed(seed, "aniso"), combine=combine)
        stats = anisotropy.summarize(values)
        path = outdir / "stats.json"
        _dump_json(path, {"_meta": meta, "mode": mode, "combine": combine,
                          "n_values": len(values), **stats.to_dict()})
        artifacts["stats.json"] = path
        rows = anisotropy.export_distribution(values, opts.get("bins", 20))
        hist = outdir / "hist.csv"
        hist.write_text(f"# config_hash={cfg_hash} version={meta['version']}\n"
                        + anisotropy.histogram_csv(rows), encoding="utf-8")
        artifacts["hist.csv"] = hist

    # ---- disperser training ------------------------------------------------
    def stage_disperse():
        opts = config.get("disperser", {})
        sets = formats.read_sets(_resolve(base_dir, inputs["sets"]))
        cfg = disperser.LossConfig(
            alpha=opts.get("alpha", 0.01), margin=opts.get("margin", 0.5),
            batch_size=opts.get("batch_size", 32),
            lr_head=opts.get("lr_head", 0.1), lr_embed=opts.get("lr_embed", 0.1),
            epochs=opts.get("epochs", 50), seed=sub_seed(seed, "disperse"),
            center=opts.get("center", True))
        params = disperser.train_disperser(sets, cfg)
        path = outdir / "params.json"
        _dump_json(path, {"_meta": meta, **params.to_dict()})
        artifacts["params.json"] = path

        rule = disperser.InferenceRule(threshold=opts.get("threshold", 4.45))
        choices = {s.set_id: disperser.infer(params, s, rule) for s in sets}
        correct = sum(1 for s in sets if choices[s.set_id] == s.gold)
        cpath = outdir / "choices.json"
        _dump_json(cpath, {"_meta": meta, "threshold": rule.threshold,
                           "choices": choices,
                           "accuracy": correct / len(sets) if sets else 0.0})
        artifacts["choices.json"] = cpath

    # ---- coreference -------------------------------------------------------
    def stage_coref():
        opts = config.get("coref", {})
        mentions = formats.read_mentions(_resolve(base_dir, inputs["mentions"]))
        _, emb = formats.read_embeddings(_resolve(base_dir, inputs["embeddings"]))
        pairs = coref.generate_pairs(mentions, topic_filter=opts.get("topic_filter", False))
        coref.attach_pair_features(pairs, emb)
        params = coref.train_pairwise_scorer(
            [p.features for p in pairs], [p.label for p in pairs],
            epochs=opts.get("epochs", 10), lr=opts.get("lr", 0.5),
            seed=sub_seed(seed, "coref"))
        scored = coref.score_pairs(params, pairs)

        ppath = outdir / "pairs_scored.jsonl"
        with open(ppath, "w", encoding="utf-8") as fh:
            formats.write_pairs(scored, fh, cfg_hash)
        artifacts["pairs_scored.jsonl"] = ppath

        threshold = opts.get("threshold", 7.0)
        if threshold == "mean":
            threshold = coref.mean_threshold([p.affinity for p in scored])
        assignment = coref.cluster_connected_components(
            scored, threshold, [m.mention_id for m in mentions])
        cpath = outdir / "clusters.json"
        with open(cpath, "w", encoding="utf-8") as fh:
            formats.write_clusters(assignment, fh, cfg_hash)
        artifacts["clusters.json"] = cpath

        lemma_of = {m.mention_id: m.lemma for m in mentions}
        predicted_pos = [p for p in scored if p.affinity > threshold]
        dr = coref.diff_rate(predicted_pos, lemma_of)
        lpath = outdir / "diff_rate.json"
        _dump_json(lpath, {"_meta": meta, "threshold": threshold, **dr.to_dict()})
        artifacts["diff_rate.json"] = lpath

        baseline = coref.lemma_baseline(mentions)
        bpath = outdir / "clusters_lemma.json"
        with open(bpath, "w", encoding="utf-8") as fh:
            formats.write_clusters(baseline, fh, cfg_hash)
        artifacts["clusters_lemma.json"] = bpath

    # ---- evaluation --------------------------------------------------------
    def stage_eval():
        mentions = formats.read_mentions(_resolve(base_dir, inputs["mentions"]))
        key = coref.clustering_to_chains(coref.gold_clustering(mentions))
        response_path = artifacts.get("clusters.json", outdir / "clusters.json")
        response = formats.read_clusters(response_path)
        report = metrics.evaluate(key, response)
        rpath = outdir / "metric_report.json"
        _dump_json(rpath, {"_meta": meta, **report.to_dict()})
        artifacts["metric_report.json"] = rpath
        tpath = outdir / "report.txt"
        tpath.write_text(f"# config_hash={cfg_hash} version={meta['version']}\n"
                         + metrics.format_report_table(report), encoding="utf-8")
        artifacts["report.txt"] = tpath

    stage_fns = {"aniso": stage_aniso, "disperse": stage_disperse,
                 "coref": stage_coref, "eval": stage_eval}
    for name in stages:
        run_stage(name, stage_fns[name])
    return artifacts
