"""FastAPI service wrapping the core package.

Every endpoint is a thin adapter: parse the pydantic request, call the core
function, wrap the result.  Toolkit errors map to 422 (validation) or 400
(bad data); pipeline stage failures map to 500 with the stage name.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .. import __version__, anisotropy, coref, disperser, formats, metrics, phonology, pipeline
from ..errors import PhonocorefError, PipelineStageError, ValidationError
from . import models as m


def _candidate_set(model: m.CandidateSetModel) -> disperser.CandidateSet:
    return disperser.CandidateSet(
        set_id=model.set_id, q=model.q, candidates=model.candidates,
        cls=model.cls, gold=model.gold, phon=model.phon)


def _mention(model: m.MentionModel) -> coref.Mention:
    return coref.Mention(
        mention_id=model.mention_id, doc_id=model.doc_id, sentence=model.sentence,
        span_start=model.span_start, span_end=model.span_end,
        lemma=model.lemma, gold_cluster=model.gold_cluster, topic=model.topic)


def _pair(model: m.PairModel) -> coref.MentionPair:
    features = None if model.features is None else np.array(model.features)
    return coref.MentionPair(a=model.a, b=model.b, label=model.label,
                             features=features, affinity=model.affinity)


def _loss_config(model: m.LossConfigModel) -> disperser.LossConfig:
    return disperser.LossConfig(**model.model_dump())


def _clusters_response(assignment, threshold):
    clusters = {}
    for mid, cid in assignment.items():
        clusters.setdefault(cid, []).append(mid)
    return m.ClustersResponse(
        clusters={cid: sorted(ms) for cid, ms in clusters.items()},
        threshold=threshold)


def create_app() -> FastAPI:
    app = FastAPI(title="phonocoref", version=__version__)
    translit = phonology.Transliterator()
    translit_strict = phonology.Transliterator(policy="error")
    features = phonology.FeatureTable()

    @app.exception_handler(PhonocorefError)
    async def _toolkit_error(request, exc):
        if isinstance(exc, PipelineStageError):
            return JSONResponse(status_code=500, content={
                "error": type(exc).__name__, "detail": str(exc), "stage": exc.stage})
        if isinstance(exc, ValidationError):
            return JSONResponse(status_code=422, content={
                "error": "ValidationError",
                "failures": [{"file": f.file, "line": f.line, "message": f.message}
                             for f in exc.failures]})
        return JSONResponse(status_code=400, content={
            "error": type(exc).__name__, "detail": str(exc)})

    @app.get("/health", response_model=m.HealthResponse)
    def health():
        return m.HealthResponse(status="ok", version=__version__)

    # ---- phonology ---------------------------------------------------------

    @app.post("/phon/transliterate", response_model=m.TransliterateResponse)
    def phon_transliterate(req: m.TransliterateRequest):
        t = translit_strict if req.strict else translit
        result = t.transliterate_detailed(req.text)
        return m.TransliterateResponse(segments=list(result.sequence.segments),
                                       skipped=result.skipped)

    @app.post("/phon/featurize", response_model=m.FeaturizeResponse)
    def phon_featurize(req: m.FeaturizeRequest):
        t = translit_strict if req.strict else translit
        result = t.transliterate_detailed(req.text)
        matrix = features.featurize(result.sequence)
        padded = None
        if req.pad_len is not None:
            padded = phonology.pad_features(matrix, req.pad_len).tolist()
        return m.FeaturizeResponse(segments=list(result.sequence.segments),
                                   rows=matrix.tolist(), skipped=result.skipped,
                                   padded=padded)

    @app.post("/phon/max-pad-length", response_model=m.IntValueResponse)
    def phon_max_pad_length(req: m.MaxPadLengthRequest):
        t = translit_strict if req.strict else translit
        return m.IntValueResponse(value=phonology.max_pad_length(req.corpora, t))

    @app.post("/phon/concat", response_model=m.VectorResponse)
    def phon_concat(req: m.ConcatRequest):
        out = phonology.concat_with_embedding(req.embedding, req.padded)
        return m.VectorResponse(vector=out.tolist())

    # ---- disperser ---------------------------------------------------------

    @app.post("/disperse/encode-pair", response_model=m.VectorResponse)
    def disperse_encode_pair(req: m.EncodePairRequest):
        out = disperser.encode_pair(req.cls_vec, req.arg1, req.arg2)
        return m.VectorResponse(vector=out.tolist())

    @app.post("/disperse/loss/bce", response_model=m.ValueResponse)
    def disperse_bce(req: m.BceLossRequest):
        return m.ValueResponse(value=disperser.bce_loss(req.preds, req.labels))

    @app.post("/disperse/loss/cosine", response_model=m.ValueResponse)
    def disperse_cosine(req: m.CosineLossRequest):
        return m.ValueResponse(
            value=disperser.cosine_embedding_loss(req.x1, req.x2, req.y, req.margin))

    @app.post("/disperse/loss/combined", response_model=m.ValueResponse)
    def disperse_combined(req: m.CombinedLossRequest):
        return m.ValueResponse(value=disperser.combined_loss(req.l_bce, req.l_cos, req.alpha))

    @app.post("/disperse/train", response_model=m.DisperserParamsModel)
    def disperse_train(req: m.TrainDisperserRequest):
        sets = [_candidate_set(s) for s in req.sets]
        params = disperser.train_disperser(sets, _loss_config(req.config))
        return m.DisperserParamsModel(**params.to_dict())

    @app.post("/disperse/infer", response_model=m.InferResponse)
    def disperse_infer(req: m.InferRequest):
        params = disperser.DisperserParams.from_dict(req.params.model_dump())
        rule = disperser.InferenceRule(threshold=req.threshold)
        choices, distances = {}, {}
        for sm in req.sets:
            s = _candidate_set(sm)
            choices[s.set_id] = disperser.infer(params, s, rule)
            distances[s.set_id] = disperser.candidate_distances(params, s).tolist()
        return m.InferResponse(choices=choices, distances=distances)

    @app.post("/disperse/gradient-check", response_model=m.GradientCheckResponse)
    def disperse_gradient_check(req: m.GradientCheckRequest):
        params = disperser.DisperserParams.from_dict(req.params.model_dump())
        by_layer = disperser.gradient_check_by_layer(
            params, _candidate_set(req.set), req.epsilon)
        return m.GradientCheckResponse(max_rel_error=max(by_layer.values()),
                                       by_layer=by_layer)

    # ---- anisotropy ----------------------------------------------------------

    @app.post("/aniso/report", response_model=m.AnisoReportResponse)
    def aniso_report(req: m.AnisoReportRequest):
        sets = [_candidate_set(s) for s in req.sets]
        if req.mode == "within":
            values = [v for s in sets
                      for v in anisotropy.within_set_similarities(s, req.combine)]
        else:
            values = anisotropy.beyond_set_similarities(
                sets, sample_n=req.sample, seed=req.seed, combine=req.combine)
        stats = anisotropy.summarize(values)
        rows = anisotropy.export_distribution(values, req.bins)
        return m.AnisoReportResponse(
            stats=m.StatsModel(**stats.to_dict()), n_values=len(values),
            histogram=[m.HistogramRow(bin_left=l, bin_right=r, count=c)
                       for l, r, c in rows])

    # ---- coreference ---------------------------------------------------------

    @app.post("/coref/mark", response_model=m.MarkResponse)
    def coref_mark(req: m.MarkRequest):
        return m.MarkResponse(marked=coref.mark_mentions(_mention(req.mention)))

    @app.post("/coref/pairs", response_model=m.PairsResponse)
    def coref_pairs(req: m.GeneratePairsRequest):
        pairs = coref.generate_pairs([_mention(x) for x in req.mentions],
                                     topic_filter=req.topic_filter)
        if req.embeddings_jsonl is not None:
            _, emb = formats.parse_embeddings(req.embeddings_jsonl)
            coref.attach_pair_features(pairs, emb)
        return m.PairsResponse(pairs=[
            m.PairModel(a=p.a, b=p.b, label=p.label,
                        features=None if p.features is None else p.features.tolist())
            for p in pairs])

    @app.post("/coref/pair-features", response_model=m.VectorResponse)
    def coref_pair_features(req: m.PairFeaturesRequest):
        out = coref.build_pair_features(req.cls_vec, req.fx, req.fy)
        return m.VectorResponse(vector=out.tolist())

    @app.post("/coref/train", response_model=m.ScorerParamsModel)
    def coref_train(req: m.TrainScorerRequest):
        params = coref.train_pairwise_scorer(
            req.features, req.labels, epochs=req.epochs, lr=req.lr, seed=req.seed)
        return m.ScorerParamsModel(**params.to_dict())

    @app.post("/coref/score", response_model=m.PairsResponse)
    def coref_score(req: m.ScorePairsRequest):
        params = coref.PairwiseScorerParams.from_dict(req.params.model_dump())
        scored = coref.score_pairs(params, [_pair(p) for p in req.pairs])
        return m.PairsResponse(pairs=[
            m.PairModel(a=p.a, b=p.b, label=p.label, affinity=p.affinity)
            for p in scored])

    @app.post("/coref/cluster", response_model=m.ClustersResponse)
    def coref_cluster(req: m.ClusterRequest):
        pairs = [_pair(p) for p in req.pairs]
        threshold = req.threshold
        if threshold == "mean":
            threshold = coref.mean_threshold([p.affinity for p in pairs])
        assignment = coref.cluster_connected_components(pairs, threshold, req.mention_ids)
        return _clusters_response(assignment, threshold)

    @app.post("/coref/lemma-baseline", response_model=m.ClustersResponse)
    def coref_lemma(req: m.LemmaBaselineRequest):
        assignment = coref.lemma_baseline([_mention(x) for x in req.mentions])
        return _clusters_response(assignment, 0.5)

    @app.post("/coref/diff-rate", response_model=m.DiffRateResponse)
    def coref_diff_rate(req: m.DiffRateRequest):
        dr = coref.diff_rate([_pair(p) for p in req.pairs], req.lemmas)
        return m.DiffRateResponse(**dr.to_dict())

    @app.post("/coref/mean-threshold", response_model=m.ValueResponse)
    def coref_mean_threshold(req: m.MeanThresholdRequest):
        return m.ValueResponse(value=coref.mean_threshold(req.affinities))

    # ---- metrics -------------------------------------------------------------

    @app.post("/coref/eval", response_model=m.MetricReportModel)
    def coref_eval(req: m.EvaluateRequest):
        report = metrics.evaluate(req.key, req.response, strict=req.strict)
        d = report.to_dict()
        return m.MetricReportModel(
            muc=m.MetricValues(**d["muc"]), b_cubed=m.MetricValues(**d["b_cubed"]),
            ceaf_e=m.MetricValues(**d["ceaf_e"]), blanc=m.MetricValues(**d["blanc"]),
            conll_f1=d["conll_f1"], table=metrics.format_report_table(report))

    # ---- pipeline ------------------------------------------------------------

    def _materialize(req: m.PipelineRequest, workdir: Path):
        for name, content in req.files.items():
            target = workdir / name
            if not target.resolve().is_relative_to(workdir.resolve()):
                raise HTTPException(status_code=400, detail=f"bad file name {name!r}")
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(content, encoding="utf-8")

    @app.post("/pipeline/validate", response_model=m.ValidateResponse)
    def pipeline_validate(req: m.PipelineRequest):
        with tempfile.TemporaryDirectory() as tmp:
            _materialize(req, Path(tmp))
            failures = pipeline.validate(req.config, tmp)
        return m.ValidateResponse(failures=[
            m.FailureModel(file=f.file, line=f.line, message=f.message)
            for f in failures])

    @app.post("/pipeline/run", response_model=m.PipelineRunResponse)
    def pipeline_run(req: m.PipelineRequest):
        with tempfile.TemporaryDirectory() as tmp:
            workdir = Path(tmp)
            _materialize(req, workdir)
            config = dict(req.config)
            config["outdir"] = "out"
            try:
                artifacts = pipeline.run_pipeline(config, tmp)
            except PipelineStageError as exc:
                stale = workdir / "out" / ".stale"
                detail = {"error": "PipelineStageError", "stage": exc.stage,
                          "detail": str(exc)}
                if stale.exists():
                    detail["stale"] = stale.read_text(encoding="utf-8")
                raise HTTPException(status_code=500, detail=detail) from exc
            payload = {name: path.read_text(encoding="utf-8")
                       for name, path in artifacts.items()}
            cfg_hash = pipeline.compute_config_hash(config, tmp)
        return m.PipelineRunResponse(artifacts=payload, config_hash=cfg_hash)

    return app


app = create_app()
