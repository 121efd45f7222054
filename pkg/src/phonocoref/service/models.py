"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field

Vector = list[float]
Matrix = list[Vector]


class HealthResponse(BaseModel):
    status: str
    version: str


# ---- phonology -------------------------------------------------------------

class TransliterateRequest(BaseModel):
    text: str
    strict: bool = False


class TransliterateResponse(BaseModel):
    segments: list[str]
    skipped: int


class FeaturizeRequest(BaseModel):
    text: str
    pad_len: Optional[int] = None
    strict: bool = False


class FeaturizeResponse(BaseModel):
    segments: list[str]
    rows: Matrix
    skipped: int
    padded: Optional[Vector] = None


class MaxPadLengthRequest(BaseModel):
    corpora: list[list[str]]
    strict: bool = False


class ValueResponse(BaseModel):
    value: float


class IntValueResponse(BaseModel):
    value: int


class ConcatRequest(BaseModel):
    embedding: Vector
    padded: Vector


class VectorResponse(BaseModel):
    vector: Vector


# ---- disperser -------------------------------------------------------------

class CandidateSetModel(BaseModel):
    set_id: str
    q: Vector
    candidates: Matrix = Field(min_length=4, max_length=4)
    cls: Matrix = Field(min_length=4, max_length=4)
    gold: int = Field(ge=0, le=3)
    phon: Optional[Matrix] = None


class LossConfigModel(BaseModel):
    alpha: float = 0.01
    margin: float = 0.5
    batch_size: int = 32
    lr_head: float = 0.1
    lr_embed: float = 0.1
    epochs: int = 30
    seed: int = 0
    center: bool = True


class EncodePairRequest(BaseModel):
    cls_vec: Vector = Field(alias="cls")
    arg1: Vector
    arg2: Vector

    model_config = {"populate_by_name": True}


class BceLossRequest(BaseModel):
    preds: Vector
    labels: Vector


class CosineLossRequest(BaseModel):
    x1: Vector
    x2: Vector
    y: Literal[1, -1]
    margin: float = 0.5


class CombinedLossRequest(BaseModel):
    l_bce: float
    l_cos: float
    alpha: float = 0.01


class DisperserParamsModel(BaseModel):
    layers: dict
    config: dict


class TrainDisperserRequest(BaseModel):
    sets: list[CandidateSetModel]
    config: LossConfigModel = LossConfigModel()


class InferRequest(BaseModel):
    params: DisperserParamsModel
    sets: list[CandidateSetModel]
    threshold: float = 4.45


class InferResponse(BaseModel):
    choices: dict[str, int]
    distances: dict[str, Vector]


class GradientCheckRequest(BaseModel):
    params: DisperserParamsModel
    set: CandidateSetModel
    epsilon: float = 1e-5


class GradientCheckResponse(BaseModel):
    max_rel_error: float
    by_layer: dict[str, float]


# ---- anisotropy ------------------------------------------------------------

class AnisoReportRequest(BaseModel):
    sets: list[CandidateSetModel]
    mode: Literal["within", "beyond"] = "within"
    sample: int = 100
    seed: int = 0
    combine: Literal["cls", "sum"] = "cls"
    bins: int = 20


class StatsModel(BaseModel):
    mean: float
    variance: float
    stdev: float
    min: float


class HistogramRow(BaseModel):
    bin_left: float
    bin_right: float
    count: int


class AnisoReportResponse(BaseModel):
    stats: StatsModel
    n_values: int
    histogram: list[HistogramRow]


# ---- coreference -----------------------------------------------------------

class MentionModel(BaseModel):
    mention_id: str
    doc_id: str
    sentence: str
    span_start: int
    span_end: int
    lemma: str
    gold_cluster: str
    topic: Optional[str] = None


class MarkRequest(BaseModel):
    mention: MentionModel


class MarkResponse(BaseModel):
    marked: str


class GeneratePairsRequest(BaseModel):
    mentions: list[MentionModel]
    topic_filter: bool = False
    embeddings_jsonl: Optional[str] = None  # when given, features are attached


class PairModel(BaseModel):
    a: str
    b: str
    label: Optional[int] = None
    affinity: Optional[float] = None
    features: Optional[Vector] = None


class PairsResponse(BaseModel):
    pairs: list[PairModel]


class PairFeaturesRequest(BaseModel):
    cls_vec: Vector = Field(alias="cls")
    fx: Vector
    fy: Vector

    model_config = {"populate_by_name": True}


class TrainScorerRequest(BaseModel):
    features: Matrix
    labels: list[int]
    epochs: int = 10
    lr: float = 0.5
    seed: int = 0


class ScorerParamsModel(BaseModel):
    w: Vector
    b: float
    epochs: int = 10
    seed: int = 0


class ScorePairsRequest(BaseModel):
    params: ScorerParamsModel
    pairs: list[PairModel]


class ClusterRequest(BaseModel):
    pairs: list[PairModel]
    threshold: Union[float, Literal["mean"]] = 7.0
    mention_ids: list[str] = []


class ClustersResponse(BaseModel):
    clusters: dict[str, list[str]]
    threshold: float


class LemmaBaselineRequest(BaseModel):
    mentions: list[MentionModel]


class DiffRateRequest(BaseModel):
    pairs: list[PairModel]
    lemmas: dict[str, str]


class DiffRateResponse(BaseModel):
    tp: int
    l1: int
    l2: int
    diff_rate: float
    undefined: bool


class MeanThresholdRequest(BaseModel):
    affinities: Vector


# ---- metrics ---------------------------------------------------------------

class EvaluateRequest(BaseModel):
    key: dict[str, list[str]]
    response: dict[str, list[str]]
    strict: bool = False


class MetricValues(BaseModel):
    precision: float
    recall: float
    f1: float


class MetricReportModel(BaseModel):
    muc: MetricValues
    b_cubed: MetricValues
    ceaf_e: MetricValues
    blanc: MetricValues
    conll_f1: float
    table: str


# ---- pipeline --------------------------------------------------------------

class PipelineRequest(BaseModel):
    config: dict
    files: dict[str, str] = {}


class FailureModel(BaseModel):
    file: str
    line: int
    message: str


class ValidateResponse(BaseModel):
    failures: list[FailureModel]


class PipelineRunResponse(BaseModel):
    artifacts: dict[str, str]
    config_hash: str
