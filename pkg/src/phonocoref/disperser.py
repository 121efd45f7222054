"""Embedding disperser: combined BCE + cosine-embedding training and
threshold-based candidate selection.

Three small trainable pieces operate on precomputed embeddings:

* ``linear_sigmoid`` head: affine map + sigmoid over the encoded
  (cls, arg1, arg2) pair, trained with BCE against the correct-answer label;
* ``cosine embedding`` layer: affine map of cls ⊕ arg1 to a 128-d vector x1;
* ``auxiliary discriminator``: affine map of cls ⊕ arg2 (plus the padded
  articulatory vector when present) to a 128-d vector x2.

The cosine-embedding loss ties x1 and x2: it pulls the pair together when
arg2 is the correct answer (y=+1) and pushes cos(x1, x2) below the margin
otherwise.  The total objective is ``alpha * L_bce + L_cos``.  At inference
the candidate whose discriminator output lies closest (Euclidean) to the
cosine-layer output is selected.

Gradients are derived by hand so they can be audited against central finite
differences (see :func:`gradient_check`).  Everything is plain numpy;
training is single-threaded and bit-reproducible for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyBatchError,
    NonFiniteLossError,
    ZeroNormVectorError,
)

OUTPUT_DIM = 128  # cosine-embedding layer and auxiliary discriminator width
CLAMP_EPS = 1e-7


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

@dataclass
class CandidateSet:
    """One Cloze-style question: context embedding, 4 candidates, gold index.

    ``cls`` holds the pooled-token embedding of each (context, candidate)
    pairing, so all of ``q``, ``candidates[i]`` and ``cls[i]`` share one
    dimensionality.  ``phon`` optionally carries one padded articulatory
    vector per candidate.
    """

    set_id: str
    q: np.ndarray
    candidates: np.ndarray
    cls: np.ndarray
    gold: int
    phon: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.candidates = np.asarray(self.candidates, dtype=np.float64)
        self.cls = np.asarray(self.cls, dtype=np.float64)
        if self.candidates.shape[0] != 4 or self.cls.shape[0] != 4:
            raise ValueError("a candidate set holds exactly 4 candidates")
        if not (self.candidates.shape[1] == self.cls.shape[1] == self.q.shape[0]):
            raise DimensionMismatchError("q, candidates and cls must share one dimension")
        if self.gold not in (0, 1, 2, 3):
            raise ValueError(f"gold index {self.gold} out of range")
        if self.phon is not None:
            self.phon = np.asarray(self.phon, dtype=np.float64)
            if self.phon.shape[0] != 4:
                raise ValueError("phon carries one vector per candidate")

    @property
    def dim(self):
        return self.q.shape[0]

    @property
    def phon_dim(self):
        return 0 if self.phon is None else self.phon.shape[1]


@dataclass
class LossConfig:
    """Training configuration.  ``center=True`` removes the training-set mean
    of every input family before the affine layers and folds it back into the
    trained biases, which leaves the stored model a plain affine map; without
    it, gradient descent stalls on strongly anisotropic inputs because every
    sample shares one dominant direction."""

    alpha: float = 0.01
    margin: float = 0.5
    batch_size: int = 32
    lr_head: float = 1e-1
    lr_embed: float = 1e-1
    epochs: int = 30
    seed: int = 0
    center: bool = True

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not 0 <= self.margin < 1:
            raise ValueError("margin must lie in [0, 1)")


@dataclass
class InferenceRule:
    threshold: float = 4.45
    tie: str = "lowest-index"


@dataclass
class DisperserParams:
    """Weights of the three heads, plus the config they were trained with."""

    w_head: np.ndarray  # (4d,)
    b_head: float
    w_cos: np.ndarray  # (OUTPUT_DIM, 2d)
    b_cos: np.ndarray  # (OUTPUT_DIM,)
    w_disc: np.ndarray  # (OUTPUT_DIM, 2d + phon_dim)
    b_disc: np.ndarray  # (OUTPUT_DIM,)
    config: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        self.w_head = np.asarray(self.w_head, dtype=np.float64)
        self.w_cos = np.asarray(self.w_cos, dtype=np.float64)
        self.b_cos = np.asarray(self.b_cos, dtype=np.float64)
        self.w_disc = np.asarray(self.w_disc, dtype=np.float64)
        self.b_disc = np.asarray(self.b_disc, dtype=np.float64)
        if self.w_cos.shape[0] != OUTPUT_DIM or self.w_disc.shape[0] != OUTPUT_DIM:
            raise ValueError(f"embedding heads must output {OUTPUT_DIM} dims")

    @property
    def dim(self):
        return self.w_cos.shape[1] // 2

    @property
    def phon_dim(self):
        return self.w_disc.shape[1] - 2 * self.dim

    # -- (de)serialization ---------------------------------------------------

    def to_dict(self):
        cfg = self.config
        return {
            "layers": {
                "linear_sigmoid": {"w": self.w_head.tolist(), "b": self.b_head,
                                   "shape": list(self.w_head.shape)},
                "cosine_embedding": {"w": self.w_cos.tolist(), "b": self.b_cos.tolist(),
                                     "shape": list(self.w_cos.shape)},
                "auxiliary_discriminator": {"w": self.w_disc.tolist(), "b": self.b_disc.tolist(),
                                            "shape": list(self.w_disc.shape)},
            },
            "config": {
                "alpha": cfg.alpha, "margin": cfg.margin, "batch_size": cfg.batch_size,
                "lr_head": cfg.lr_head, "lr_embed": cfg.lr_embed,
                "epochs": cfg.epochs, "seed": cfg.seed,
            },
        }

    @classmethod
    def from_dict(cls, d):
        layers = d["layers"]
        cfg = LossConfig(**d.get("config", {}))
        return cls(
            w_head=np.array(layers["linear_sigmoid"]["w"]),
            b_head=float(layers["linear_sigmoid"]["b"]),
            w_cos=np.array(layers["cosine_embedding"]["w"]),
            b_cos=np.array(layers["cosine_embedding"]["b"]),
            w_disc=np.array(layers["auxiliary_discriminator"]["w"]),
            b_disc=np.array(layers["auxiliary_discriminator"]["b"]),
            config=cfg,
        )


# ---------------------------------------------------------------------------
# elementary operations
# ---------------------------------------------------------------------------

def encode_pair(cls, arg1, arg2):
    """cls ⊕ arg1 ⊕ arg2 ⊕ (arg1 ⊙ arg2)."""
    cls = np.asarray(cls, dtype=np.float64)
    arg1 = np.asarray(arg1, dtype=np.float64)
    arg2 = np.asarray(arg2, dtype=np.float64)
    if arg1.shape != arg2.shape:
        raise DimensionMismatchError(
            f"arg1 {arg1.shape} and arg2 {arg2.shape} must share a dimension")
    return np.concatenate([cls, arg1, arg2, arg1 * arg2])


def bce_loss(preds, labels):
    """Mean binary cross entropy; predictions clamped away from {0, 1}."""
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.size == 0:
        raise EmptyBatchError("bce_loss over zero samples")
    if preds.shape != labels.shape:
        raise DimensionMismatchError("preds and labels differ in length")
    p = np.clip(preds, CLAMP_EPS, 1 - CLAMP_EPS)
    return float(-np.mean(labels * np.log(p) + (1 - labels) * np.log(1 - p)))


def _cosine(x1, x2):
    n1 = np.linalg.norm(x1)
    n2 = np.linalg.norm(x2)
    if n1 == 0 or n2 == 0:
        raise ZeroNormVectorError("cosine undefined for zero-norm vector")
    # rounding can push |cos| a few ulp past 1, which would make the
    # positive-pair loss negative
    return float(np.clip(np.dot(x1, x2) / (n1 * n2), -1.0, 1.0))


def cosine_embedding_loss(x1, x2, y, margin):
    """1 - cos(x1,x2) for y=+1; max(0, cos(x1,x2) - margin) for y=-1."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise DimensionMismatchError("x1 and x2 differ in dimension")
    c = _cosine(x1, x2)
    if y == 1:
        return 1.0 - c
    if y == -1:
        return max(0.0, c - margin)
    raise ValueError("y must be +1 or -1")


def combined_loss(l_bce, l_cos, alpha):
    return alpha * l_bce + l_cos


# ---------------------------------------------------------------------------
# forward/backward over a batch of candidate samples
# ---------------------------------------------------------------------------

def _flatten_sets(sets):
    """Turn candidate sets into per-candidate training rows.

    Returns (U, V, F, Y) where U feeds the cosine layer (cls ⊕ q), V feeds
    the discriminator (cls ⊕ candidate ⊕ phon), F feeds the BCE head and Y
    is the 0/1 correct-answer label.
    """
    if not sets:
        raise EmptyBatchError("no candidate sets")
    dim = sets[0].dim
    phon_dim = sets[0].phon_dim
    U, V, F, Y = [], [], [], []
    for s in sets:
        if s.dim != dim or s.phon_dim != phon_dim:
            raise DimensionMismatchError("all candidate sets must share dimensions")
        for i in range(4):
            U.append(np.concatenate([s.cls[i], s.q]))
            v = np.concatenate([s.cls[i], s.candidates[i]])
            if s.phon is not None:
                v = np.concatenate([v, s.phon[i]])
            V.append(v)
            F.append(encode_pair(s.cls[i], s.q, s.candidates[i]))
            Y.append(1.0 if i == s.gold else 0.0)
    return np.stack(U), np.stack(V), np.stack(F), np.array(Y)


def _loss_core(w_head, b_head, w_cos, b_cos, w_disc, b_disc, U, V, F, Y, alpha, margin):
    """Combined loss from raw weight arrays; shared by training and the
    finite-difference path, which perturbs the arrays in place."""
    z = F @ w_head + b_head
    p = 1.0 / (1.0 + np.exp(-z))
    p_c = np.clip(p, CLAMP_EPS, 1 - CLAMP_EPS)
    l_bce = -np.mean(Y * np.log(p_c) + (1 - Y) * np.log(1 - p_c))
    X1 = U @ w_cos.T + b_cos
    X2 = V @ w_disc.T + b_disc
    n1 = np.linalg.norm(X1, axis=1)
    n2 = np.linalg.norm(X2, axis=1)
    if np.any(n1 == 0) or np.any(n2 == 0):
        raise ZeroNormVectorError("zero-norm embedding output")
    cos = np.clip(np.einsum("ij,ij->i", X1, X2) / (n1 * n2), -1.0, 1.0)
    per = np.where(Y == 1.0, 1.0 - cos, np.maximum(0.0, cos - margin))
    return alpha * l_bce + np.mean(per)


def _batch_loss_and_grads(params, U, V, F, Y, cfg, want_grads=True):
    """L_comb over one batch plus, optionally, gradients for every weight."""
    n = len(Y)
    # BCE head
    z = F @ params.w_head + params.b_head
    p = 1.0 / (1.0 + np.exp(-z))
    p_c = np.clip(p, CLAMP_EPS, 1 - CLAMP_EPS)
    l_bce = float(-np.mean(Y * np.log(p_c) + (1 - Y) * np.log(1 - p_c)))

    # cosine-embedding layer and discriminator
    X1 = U @ params.w_cos.T + params.b_cos
    X2 = V @ params.w_disc.T + params.b_disc
    n1 = np.linalg.norm(X1, axis=1)
    n2 = np.linalg.norm(X2, axis=1)
    if np.any(n1 == 0) or np.any(n2 == 0):
        raise ZeroNormVectorError("zero-norm embedding output")
    dots = np.einsum("ij,ij->i", X1, X2)
    cos = np.clip(dots / (n1 * n2), -1.0, 1.0)
    y_sign = np.where(Y == 1.0, 1.0, -1.0)
    per = np.where(y_sign == 1.0, 1.0 - cos, np.maximum(0.0, cos - cfg.margin))
    l_cos = float(np.mean(per))
    loss = combined_loss(l_bce, l_cos, cfg.alpha)

    if not want_grads:
        return loss, l_bce, l_cos, None

    # d l_bce / dz; the clamp zeroes the gradient where it is active
    unclamped = (p > CLAMP_EPS) & (p < 1 - CLAMP_EPS)
    dz = np.where(unclamped, p - Y, 0.0) / n
    g_w_head = cfg.alpha * (F.T @ dz)
    g_b_head = cfg.alpha * float(np.sum(dz))

    # d cos / dx1, dx2
    dcos_dx1 = X2 / (n1 * n2)[:, None] - X1 * (cos / n1**2)[:, None]
    dcos_dx2 = X1 / (n1 * n2)[:, None] - X2 * (cos / n2**2)[:, None]
    # d per-sample loss / d cos
    dl_dcos = np.where(y_sign == 1.0, -1.0, np.where(cos > cfg.margin, 1.0, 0.0)) / n
    dX1 = dcos_dx1 * dl_dcos[:, None]
    dX2 = dcos_dx2 * dl_dcos[:, None]
    g_w_cos = dX1.T @ U
    g_b_cos = dX1.sum(axis=0)
    g_w_disc = dX2.T @ V
    g_b_disc = dX2.sum(axis=0)

    grads = {
        "w_head": g_w_head, "b_head": g_b_head,
        "w_cos": g_w_cos, "b_cos": g_b_cos,
        "w_disc": g_w_disc, "b_disc": g_b_disc,
    }
    return loss, l_bce, l_cos, grads


def init_params(dim, phon_dim=0, config=None, rng=None):
    """Uniform ±1/sqrt(fan_in) initialization for all three heads."""
    config = config or LossConfig()
    rng = rng or np.random.default_rng(config.seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return DisperserParams(
        w_head=uniform(4 * dim, 4 * dim),
        b_head=float(uniform((), 4 * dim)),
        w_cos=uniform((OUTPUT_DIM, 2 * dim), 2 * dim),
        b_cos=uniform(OUTPUT_DIM, 2 * dim),
        w_disc=uniform((OUTPUT_DIM, 2 * dim + phon_dim), 2 * dim + phon_dim),
        b_disc=uniform(OUTPUT_DIM, 2 * dim + phon_dim),
        config=config,
    )


def train_disperser(sets, cfg=None):
    """Mini-batch SGD on the combined loss; deterministic for a fixed seed."""
    cfg = cfg or LossConfig()
    U, V, F, Y = _flatten_sets(sets)
    dim = sets[0].dim
    rng = np.random.default_rng(cfg.seed)
    params = init_params(dim, sets[0].phon_dim, cfg, rng)

    if cfg.center:
        mu_u, mu_v, mu_f = U.mean(axis=0), V.mean(axis=0), F.mean(axis=0)
        U, V, F = U - mu_u, V - mu_v, F - mu_f

    n = len(Y)
    batch = max(1, min(cfg.batch_size, n))
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            loss, l_bce, l_cos, grads = _batch_loss_and_grads(
                params, U[idx], V[idx], F[idx], Y[idx], cfg)
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch}",
                    {"epoch": epoch, "l_bce": l_bce, "l_cos": l_cos},
                )
            params.w_head = params.w_head - cfg.lr_head * grads["w_head"]
            params.b_head = params.b_head - cfg.lr_head * grads["b_head"]
            params.w_cos = params.w_cos - cfg.lr_embed * grads["w_cos"]
            params.b_cos = params.b_cos - cfg.lr_embed * grads["b_cos"]
            params.w_disc = params.w_disc - cfg.lr_embed * grads["w_disc"]
            params.b_disc = params.b_disc - cfg.lr_embed * grads["b_disc"]

    if cfg.center:
        # fold the input means into the biases: W(x - mu) + b == Wx + (b - W mu)
        params.b_head = params.b_head - float(params.w_head @ mu_f)
        params.b_cos = params.b_cos - params.w_cos @ mu_u
        params.b_disc = params.b_disc - params.w_disc @ mu_v
    return params


def evaluate_loss(params, sets, cfg=None):
    """Combined loss of ``params`` over ``sets`` without updating anything."""
    cfg = cfg or params.config
    U, V, F, Y = _flatten_sets(sets)
    loss, l_bce, l_cos, _ = _batch_loss_and_grads(params, U, V, F, Y, cfg, want_grads=False)
    return loss, l_bce, l_cos


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

def candidate_distances(params, s):
    """Euclidean distance between discriminator and cosine-layer outputs."""
    U, V, _, _ = _flatten_sets([s])
    X1 = U @ params.w_cos.T + params.b_cos
    X2 = V @ params.w_disc.T + params.b_disc
    return np.linalg.norm(X2 - X1, axis=1)


def disc_outputs(params, s):
    """Auxiliary-discriminator vectors for the four candidates."""
    _, V, _, _ = _flatten_sets([s])
    return V @ params.w_disc.T + params.b_disc


def infer(params, s, rule=None):
    """Pick a candidate: the sub-threshold minimum distance if any candidate
    falls below the threshold, the global minimum otherwise; ties go to the
    lowest index.  Always returns exactly one index in 0..3."""
    rule = rule or InferenceRule()
    d = candidate_distances(params, s)
    below = np.flatnonzero(d < rule.threshold)
    pool = below if below.size else np.arange(4)
    return int(pool[np.argmin(d[pool])])


# ---------------------------------------------------------------------------
# gradient check
# ---------------------------------------------------------------------------

_LAYER_FIELDS = ("w_head", "b_head", "w_cos", "b_cos", "w_disc", "b_disc")


def _rel_err(a, b, floor=1e-6):
    denom = max(abs(a), abs(b), floor)
    return abs(a - b) / denom


def finite_difference_grads_naive(params, sample, epsilon=1e-5, cfg=None):
    """Central differences by full re-evaluation of the loss per parameter.

    Slow but maximally plain; the vectorized path below is cross-checked
    against it in the test suite.
    """
    cfg = cfg or params.config
    U, V, F, Y = _flatten_sets([sample])
    arrays = {
        "w_head": params.w_head.copy(), "b_head": np.array([params.b_head]),
        "w_cos": params.w_cos.copy(), "b_cos": params.b_cos.copy(),
        "w_disc": params.w_disc.copy(), "b_disc": params.b_disc.copy(),
    }

    def loss_now():
        return _loss_core(arrays["w_head"], arrays["b_head"][0], arrays["w_cos"],
                          arrays["b_cos"], arrays["w_disc"], arrays["b_disc"],
                          U, V, F, Y, cfg.alpha, cfg.margin)

    out = {}
    for name in _LAYER_FIELDS:
        flat = arrays[name].reshape(-1)
        fd = np.empty(flat.size)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            hi = loss_now()
            flat[j] = orig - epsilon
            lo = loss_now()
            flat[j] = orig
            fd[j] = (hi - lo) / (2 * epsilon)
        out[name] = fd.reshape(np.shape(arrays[name]))
    return out


def _cos_part(dot, n1sq, n2sq, Y, margin):
    cos = np.clip(dot / np.sqrt(n1sq * n2sq), -1.0, 1.0)
    per = np.where(Y == 1.0, 1.0 - cos, np.maximum(0.0, cos - margin))
    return per.mean(axis=-1)


def _bce_part(z, Y):
    p = 1.0 / (1.0 + np.exp(-z))
    p_c = np.clip(p, CLAMP_EPS, 1 - CLAMP_EPS)
    return -np.mean(Y * np.log(p_c) + (1 - Y) * np.log(1 - p_c), axis=-1)


def finite_difference_grads(params, sample, epsilon=1e-5, cfg=None):
    """Central differences of the combined loss for every parameter.

    Exploits the additive structure of a single-weight perturbation: bumping
    ``w_cos[i, j]`` by eps shifts column i of the cosine-layer output by
    ``eps * U[:, j]``, so the perturbed dot products and squared norms follow
    by exact algebra instead of a fresh matrix product.  The resulting
    numbers are the true perturbed losses, just computed incrementally.
    """
    cfg = cfg or params.config
    U, V, F, Y = _flatten_sets([sample])
    eps = epsilon

    z = F @ params.w_head + params.b_head
    X1 = U @ params.w_cos.T + params.b_cos
    X2 = V @ params.w_disc.T + params.b_disc
    n1sq = np.einsum("ij,ij->i", X1, X1)
    n2sq = np.einsum("ij,ij->i", X2, X2)
    dot = np.einsum("ij,ij->i", X1, X2)
    l_bce0 = _bce_part(z, Y)
    l_cos0 = _cos_part(dot, n1sq, n2sq, Y, cfg.margin)

    out = {}
    # -- BCE head: vectorize over weight index j ----------------------------
    for name, cols in (("w_head", F), ("b_head", np.ones((len(Y), 1)))):
        z_hi = z[None, :] + eps * cols.T  # (n_params, n_samples)
        z_lo = z[None, :] - eps * cols.T
        hi = cfg.alpha * _bce_part(z_hi, Y) + l_cos0
        lo = cfg.alpha * _bce_part(z_lo, Y) + l_cos0
        fd = (hi - lo) / (2 * eps)
        out[name] = fd if name == "w_head" else float(fd[0])

    # -- cosine layer / discriminator ---------------------------------------
    def embed_layer_fd(X_self, X_other, nsq_self, inputs, self_is_x1):
        k, n = X_self.shape[1], X_self.shape[0]
        m = inputs.shape[1]
        # weight (i, j): column i of X_self shifts by eps * inputs[:, j]
        shift = eps * inputs.T  # (m, n)
        dot_delta = shift[None, :, :] * X_other.T[:, None, :]  # (k, m, n)
        nsq_hi = nsq_self + 2 * X_self.T[:, None, :] * shift[None, :, :] + shift[None, :, :] ** 2
        nsq_lo = nsq_self - 2 * X_self.T[:, None, :] * shift[None, :, :] + shift[None, :, :] ** 2
        if self_is_x1:
            hi = _cos_part(dot + dot_delta, nsq_hi, n2sq, Y, cfg.margin)
            lo = _cos_part(dot - dot_delta, nsq_lo, n2sq, Y, cfg.margin)
        else:
            hi = _cos_part(dot + dot_delta, n1sq, nsq_hi, Y, cfg.margin)
            lo = _cos_part(dot - dot_delta, n1sq, nsq_lo, Y, cfg.margin)
        w_fd = (hi - lo) / (2 * eps)  # (k, m)
        # bias i: column i of X_self shifts by eps
        b_dot_delta = eps * X_other.T  # (k, n)
        b_nsq_hi = nsq_self + 2 * eps * X_self.T + eps**2
        b_nsq_lo = nsq_self - 2 * eps * X_self.T + eps**2
        if self_is_x1:
            b_hi = _cos_part(dot + b_dot_delta, b_nsq_hi, n2sq, Y, cfg.margin)
            b_lo = _cos_part(dot - b_dot_delta, b_nsq_lo, n2sq, Y, cfg.margin)
        else:
            b_hi = _cos_part(dot + b_dot_delta, n1sq, b_nsq_hi, Y, cfg.margin)
            b_lo = _cos_part(dot - b_dot_delta, n1sq, b_nsq_lo, Y, cfg.margin)
        b_fd = (b_hi - b_lo) / (2 * eps)
        return w_fd, b_fd

    w_cos_fd, b_cos_fd = embed_layer_fd(X1, X2, n1sq, U, True)
    w_disc_fd, b_disc_fd = embed_layer_fd(X2, X1, n2sq, V, False)
    # the BCE term does not depend on these layers and cancels in the
    # central difference
    out["w_cos"], out["b_cos"] = w_cos_fd, b_cos_fd
    out["w_disc"], out["b_disc"] = w_disc_fd, b_disc_fd
    return out, l_bce0, l_cos0


def gradient_check_by_layer(params, sample, epsilon=1e-5, cfg=None):
    """Max relative error of analytic vs central-difference gradients, per layer."""
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-7, 1e-3]")
    cfg = cfg or params.config
    U, V, F, Y = _flatten_sets([sample])
    _, _, _, grads = _batch_loss_and_grads(params, U, V, F, Y, cfg)
    fd, _, _ = finite_difference_grads(params, sample, epsilon, cfg)

    errors = {}
    for name in _LAYER_FIELDS:
        analytic = np.atleast_1d(np.asarray(grads[name], dtype=np.float64)).reshape(-1)
        numeric = np.atleast_1d(np.asarray(fd[name], dtype=np.float64)).reshape(-1)
        worst = 0.0
        for a, b in zip(analytic, numeric):
            worst = max(worst, _rel_err(a, b))
        errors[name] = worst
    return errors


def gradient_check(params, sample, epsilon=1e-5, cfg=None):
    """Max relative error over every parameter of the model."""
    return max(gradient_check_by_layer(params, sample, epsilon, cfg).values())
