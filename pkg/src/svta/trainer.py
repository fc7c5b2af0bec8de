"""Training of all learnable alignment parameters.

The forward pass for one mini-batch is assembled from the same functions the
inference paths use (temporal aggregation, concept projections, batched
heads, loss cores), but with autodiff Tensors for every trainable block:
concept centers, the four head matrices, the temporal-attention weights and
position embeddings, and the logit scale. Reverse-mode accumulation then
yields exact analytic gradients, which the test suite checks entry-by-entry
against central finite differences.

Optimization is decoupled-weight-decay Adam with linear warmup into a cosine
learning-rate decay. The logit scale is clamped after every step.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import store
from .concepts import ConceptSpace, caption_weight_matrix, project_rows_to_concepts
from .errors import (
    BadMagicError,
    ConfigError,
    DimMismatchError,
    NonFiniteValueError,
    ValidationError,
)
from .losses import LogitScale, LossWeights, info_nce_core, residual_norm_core
from .rng import SplitMix64
from .similarity import (
    SimilarityHeads,
    batch_frame_sentence_scores,
    batch_video_sentence_scores,
    combine_head_scores,
    init_heads,
)
from .store import EmbeddingItem, EmbeddingSet
from .temporal import (
    MEAN_POOL,
    SELF_ATTENTION,
    TemporalParams,
    aggregate_frames,
    init_temporal_params,
)

CKP_MAGIC = b"S3MACKP1"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

HEAD_PARAM_KEYS = ("a_vs", "a_fs", "a_vcsc", "a_fcsc")
TEMPORAL_PARAM_KEYS = ("w_q", "w_k", "w_v", "w_o", "pos")

# Seed tags keep the independent random streams from aliasing each other.
_TEMPORAL_TAG = 0x54454D50  # "TEMP"
_SHUFFLE_TAG = 0x53485546  # "SHUF"


@dataclass
class ModelParams:
    """Every trainable block plus the (fixed) word-to-concept assignment."""

    space: ConceptSpace
    heads: SimilarityHeads
    temporal: TemporalParams
    logit_scale: LogitScale
    anchor_free: bool = False


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    base_lr: float = 1e-3
    weight_decay: float = 0.2
    warmup_steps: int = 10
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    enable_vs: bool = True
    enable_fs: bool = True
    enable_vcsc: bool = True
    enable_fcsc: bool = True
    temporal_mode: str = SELF_ATTENTION
    n_c: int = 1024
    train_concepts: bool = True
    anchor_free: bool = False
    total_steps: int | None = None  # resolved by train() when unset

    def check(self) -> None:
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be > 0, got {self.base_lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.warmup_steps < 0:
            raise ConfigError(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        if self.n_c < 1:
            raise ConfigError(f"n_c must be >= 1, got {self.n_c}")
        self.weights.check()


@dataclass
class TraceRow:
    step: int
    l_sim: float
    l_align: float
    l_sparse: float
    total: float
    lr: float


def init_model_params(space: ConceptSpace, d: int, n_frame: int, cfg: TrainConfig) -> ModelParams:
    """Fresh trainable state on top of an initialized concept space."""
    if space.d != d:
        raise DimMismatchError(f"concept dim {space.d} != embedding dim {d}")
    return ModelParams(
        space=ConceptSpace(C=np.asarray(space.C, dtype=np.float64).copy(),
                           assignment=space.assignment.copy()),
        heads=init_heads(
            d,
            n_frame,
            enable_vs=cfg.enable_vs,
            enable_fs=cfg.enable_fs,
            enable_vcsc=cfg.enable_vcsc,
            enable_fcsc=cfg.enable_fcsc,
        ),
        temporal=init_temporal_params(cfg.temporal_mode, d, n_frame, cfg.seed ^ _TEMPORAL_TAG),
        logit_scale=LogitScale(),
        anchor_free=cfg.anchor_free,
    )


# ---------------------------------------------------------------------------
# Forward graph and gradients
# ---------------------------------------------------------------------------

def _param_tensors(params: ModelParams, train_concepts: bool) -> dict[str, ad.Tensor]:
    tensors = {
        "concepts": ad.Tensor(params.space.C, requires_grad=train_concepts),
        "a_vs": ad.parameter(params.heads.A_vs),
        "a_fs": ad.parameter(params.heads.A_fs),
        "a_vcsc": ad.parameter(params.heads.A_vcsc),
        "a_fcsc": ad.parameter(params.heads.A_fcsc),
        "log_scale": ad.parameter(np.float64(params.logit_scale.log_value)),
    }
    if params.temporal.mode == SELF_ATTENTION:
        tensors["w_q"] = ad.parameter(params.temporal.W_q)
        tensors["w_k"] = ad.parameter(params.temporal.W_k)
        tensors["w_v"] = ad.parameter(params.temporal.W_v)
        tensors["w_o"] = ad.parameter(params.temporal.W_o)
        tensors["pos"] = ad.parameter(params.temporal.pos)
    return tensors


def build_loss_graph(
    params: ModelParams,
    items: list[EmbeddingItem],
    weights: LossWeights,
    train_concepts: bool = True,
) -> dict:
    """Differentiable total loss for one mini-batch of matched pairs.

    Returns the parameter tensors plus the component and total loss tensors.
    All three components are always materialized so the loss trace reports
    them even when their weight is zero (the zero weight then also zeroes
    their gradient contribution exactly).
    """
    tensors = _param_tensors(params, train_concepts)
    C_t = tensors["concepts"]
    heads = params.heads

    frame_blocks = [np.asarray(it.frame_embeddings, dtype=np.float64) for it in items]
    sentences = np.stack([np.asarray(it.sentence_embedding, dtype=np.float64) for it in items])
    sentences_hat = sentences / np.linalg.norm(sentences, axis=1, keepdims=True)
    frames_hat = [b / np.linalg.norm(b, axis=1, keepdims=True) for b in frame_blocks]

    temporal_live = params.temporal
    if temporal_live.mode == SELF_ATTENTION:
        temporal_live = TemporalParams(
            mode=SELF_ATTENTION,
            W_q=tensors["w_q"],
            W_k=tensors["w_k"],
            W_v=tensors["w_v"],
            W_o=tensors["w_o"],
            pos=tensors["pos"],
        )

    R_v = ad.stack_rows([aggregate_frames(temporal_live, ad.constant(b)) for b in frame_blocks])
    R_v_hat = ad.l2_normalize_rows(R_v)

    sims_v, R_vc = project_rows_to_concepts(C_t, R_v)
    per_frame = [project_rows_to_concepts(C_t, ad.constant(b)) for b in frame_blocks]
    frames_c = [reps for _, reps in per_frame]
    sims_f_mean = ad.stack_rows([ad.mean_axis0(sims) for sims, _ in per_frame])
    frames_c_mean = ad.stack_rows([ad.mean_axis0(reps) for reps in frames_c])

    if params.anchor_free:
        sims_t, R_sc = project_rows_to_concepts(C_t, ad.constant(sentences))
        sparse_target = sims_t
    else:
        text_weights = caption_weight_matrix(params.space, [it.caption_token_ids for it in items])
        R_sc = ad.matmul(ad.constant(text_weights), C_t)
        sparse_target = ad.constant(text_weights)

    scores = {}
    if heads.enable_vs:
        scores["vs"] = batch_video_sentence_scores(R_v_hat, sentences_hat, tensors["a_vs"])
    if heads.enable_fs:
        scores["fs"] = batch_frame_sentence_scores(
            [ad.constant(b) for b in frames_hat], sentences_hat, tensors["a_fs"]
        )
    if heads.enable_vcsc:
        scores["vcsc"] = batch_video_sentence_scores(R_vc, R_sc, tensors["a_vcsc"])
    if heads.enable_fcsc:
        scores["fcsc"] = batch_frame_sentence_scores(frames_c, R_sc, tensors["a_fcsc"])
    S = combine_head_scores(heads, scores)

    l_sim = info_nce_core(S, tensors["log_scale"])
    l_align = residual_norm_core(R_vc, frames_c_mean, R_sc)
    l_sparse = residual_norm_core(sims_v, sims_f_mean, sparse_target)
    total = ad.add(l_sim, ad.add(ad.mul(l_align, weights.alpha), ad.mul(l_sparse, weights.beta)))

    return {
        "tensors": tensors,
        "l_sim": l_sim,
        "l_align": l_align,
        "l_sparse": l_sparse,
        "total": total,
        "scores": S,
    }


def evaluate_loss(
    params: ModelParams,
    items: list[EmbeddingItem],
    weights: LossWeights,
) -> dict[str, float]:
    """Forward-only loss components for a batch (no gradient bookkeeping)."""
    graph = build_loss_graph(params, items, weights, train_concepts=False)
    return {
        "l_sim": graph["l_sim"].item(),
        "l_align": graph["l_align"].item(),
        "l_sparse": graph["l_sparse"].item(),
        "total": graph["total"].item(),
    }


def compute_gradients(
    params: ModelParams,
    items: list[EmbeddingItem],
    weights: LossWeights,
    train_concepts: bool = True,
) -> tuple[dict[str, np.ndarray], dict[str, float]]:
    """Gradients of the total loss for every trainable block.

    Disabled heads and zero-weighted components yield exactly zero gradients
    for the blocks only they touch. Deterministic for a fixed batch order.
    """
    if len(items) == 0:
        raise ConfigError("gradient computation needs a non-empty batch")
    graph = build_loss_graph(params, items, weights, train_concepts)
    graph["total"].backward()
    grads: dict[str, np.ndarray] = {}
    for name, tensor in graph["tensors"].items():
        if name == "concepts" and not train_concepts:
            continue
        if tensor.grad is None:
            # Parameter unreachable from the loss (e.g. its head is disabled).
            grads[name] = np.zeros_like(tensor.value)
        else:
            grads[name] = np.asarray(tensor.grad, dtype=np.float64)
    components = {
        "l_sim": graph["l_sim"].item(),
        "l_align": graph["l_align"].item(),
        "l_sparse": graph["l_sparse"].item(),
        "total": graph["total"].item(),
    }
    for name, value in components.items():
        if not math.isfinite(value):
            raise NonFiniteValueError(f"{name} became non-finite")
    return grads, components


# ---------------------------------------------------------------------------
# Optimizer and schedule
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_optimizer_state(grads: dict[str, np.ndarray]) -> OptimizerState:
    return OptimizerState(
        m={k: np.zeros_like(g) for k, g in grads.items()},
        v={k: np.zeros_like(g) for k, g in grads.items()},
    )


def optimizer_step(
    values: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr_t: float,
    weight_decay: float,
) -> dict[str, np.ndarray]:
    """One decoupled-weight-decay adaptive-moment update; returns new values."""
    state.step += 1
    t = state.step
    out: dict[str, np.ndarray] = {}
    for name, g in grads.items():
        theta = values[name]
        if theta.shape != g.shape:
            raise DimMismatchError(f"{name}: value shape {theta.shape} != grad {g.shape}")
        m = state.m[name] = ADAM_BETA1 * state.m[name] + (1 - ADAM_BETA1) * g
        v = state.v[name] = ADAM_BETA2 * state.v[name] + (1 - ADAM_BETA2) * g * g
        m_hat = m / (1 - ADAM_BETA1**t)
        v_hat = v / (1 - ADAM_BETA2**t)
        out[name] = theta - lr_t * m_hat / (np.sqrt(v_hat) + ADAM_EPS) - lr_t * weight_decay * theta
    return out


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to base_lr, then cosine decay to zero at total_steps."""
    if cfg.total_steps is None:
        raise ConfigError("total_steps must be resolved before querying the schedule")
    if step < 0:
        raise ConfigError(f"step must be >= 0, got {step}")
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return cfg.base_lr * step / cfg.warmup_steps
    span = cfg.total_steps - cfg.warmup_steps
    if span <= 0:
        return cfg.base_lr
    progress = min(1.0, (step - cfg.warmup_steps) / span)
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


# ---------------------------------------------------------------------------
# Parameter plumbing
# ---------------------------------------------------------------------------

def _get_values(params: ModelParams, names) -> dict[str, np.ndarray]:
    lookup = {
        "concepts": lambda: params.space.C,
        "a_vs": lambda: params.heads.A_vs,
        "a_fs": lambda: params.heads.A_fs,
        "a_vcsc": lambda: params.heads.A_vcsc,
        "a_fcsc": lambda: params.heads.A_fcsc,
        "w_q": lambda: params.temporal.W_q,
        "w_k": lambda: params.temporal.W_k,
        "w_v": lambda: params.temporal.W_v,
        "w_o": lambda: params.temporal.W_o,
        "pos": lambda: params.temporal.pos,
        "log_scale": lambda: np.float64(params.logit_scale.log_value),
    }
    return {name: np.asarray(lookup[name]()) for name in names}


def _set_values(params: ModelParams, values: dict[str, np.ndarray]) -> None:
    for name, value in values.items():
        if name == "concepts":
            params.space.C = value
        elif name == "a_vs":
            params.heads.A_vs = value
        elif name == "a_fs":
            params.heads.A_fs = value
        elif name == "a_vcsc":
            params.heads.A_vcsc = value
        elif name == "a_fcsc":
            params.heads.A_fcsc = value
        elif name in TEMPORAL_PARAM_KEYS:
            setattr(params.temporal, {"w_q": "W_q", "w_k": "W_k", "w_v": "W_v",
                                      "w_o": "W_o", "pos": "pos"}[name], value)
        elif name == "log_scale":
            params.logit_scale.log_value = float(value)
        else:
            raise KeyError(name)


def _all_finite(params: ModelParams) -> bool:
    names = ["concepts", *HEAD_PARAM_KEYS, "log_scale"]
    if params.temporal.mode == SELF_ATTENTION:
        names += list(TEMPORAL_PARAM_KEYS)
    return all(np.all(np.isfinite(v)) for v in _get_values(params, names).values())


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def train(
    dataset: EmbeddingSet,
    space: ConceptSpace,
    cfg: TrainConfig,
) -> tuple[ModelParams, list[TraceRow]]:
    """Mini-batch training of all model parameters on matched pairs.

    Batches are drawn from a seeded shuffle each epoch; the loss trace
    records every step. Aborts with the step index if any value stops being
    finite.
    """
    cfg.check()
    problems = store.validate(dataset, vocab_size=space.n_words)
    if problems:
        raise ValidationError("; ".join(problems))
    n = len(dataset.items)
    if n == 0:
        raise ConfigError("dataset is empty")
    if cfg.batch_size > n:
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds dataset size {n}")

    params = init_model_params(space, dataset.d, dataset.n_frame, cfg)
    trace: list[TraceRow] = []
    if cfg.epochs == 0:
        return params, trace

    batches_per_epoch = math.ceil(n / cfg.batch_size)
    cfg = replace(cfg, total_steps=cfg.total_steps or cfg.epochs * batches_per_epoch)

    # Tagged stream so shuffling never replays the parameter-init sequence.
    shuffle_rng = SplitMix64(cfg.seed ^ _SHUFFLE_TAG)
    trainable = ["concepts"] if cfg.train_concepts else []
    trainable += [*HEAD_PARAM_KEYS, "log_scale"]
    if params.temporal.mode == SELF_ATTENTION:
        trainable += list(TEMPORAL_PARAM_KEYS)
    state = init_optimizer_state(
        {k: np.zeros_like(v) for k, v in _get_values(params, trainable).items()}
    )

    step = 0
    for _ in range(cfg.epochs):
        order = list(range(n))
        shuffle_rng.shuffle(order)
        for start in range(0, n, cfg.batch_size):
            batch_items = [dataset.items[i] for i in order[start : start + cfg.batch_size]]
            try:
                grads, components = compute_gradients(
                    params, batch_items, cfg.weights, cfg.train_concepts
                )
            except NonFiniteValueError as exc:
                raise NonFiniteValueError(f"aborted at step {step}: {exc}") from exc
            lr_t = lr_at(step, cfg)
            new_values = optimizer_step(
                _get_values(params, grads.keys()), grads, state, lr_t, cfg.weight_decay
            )
            _set_values(params, new_values)
            params.logit_scale.clamp()
            if not _all_finite(params):
                raise NonFiniteValueError(f"parameters became non-finite at step {step}")
            trace.append(
                TraceRow(
                    step=step,
                    l_sim=components["l_sim"],
                    l_align=components["l_align"],
                    l_sparse=components["l_sparse"],
                    total=components["total"],
                    lr=lr_t,
                )
            )
            step += 1
    return params, trace


def write_trace_csv(trace: list[TraceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "l_sim", "l_align", "l_sparse", "total", "lr"])
        for row in trace:
            writer.writerow(
                [row.step, f"{row.l_sim:.10g}", f"{row.l_align:.10g}",
                 f"{row.l_sparse:.10g}", f"{row.total:.10g}", f"{row.lr:.10g}"]
            )


# ---------------------------------------------------------------------------
# Checkpoint persistence (format S3MACKP1)
# ---------------------------------------------------------------------------

def config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)


def config_from_dict(data: dict) -> TrainConfig:
    data = dict(data)
    weights = data.pop("weights", {})
    return TrainConfig(weights=LossWeights(**weights), **data)


def save_checkpoint(path, params: ModelParams, cfg: TrainConfig) -> None:
    """Write all parameter blocks as f64 plus the config as JSON text.

    The word-to-concept assignment is not part of the checkpoint; it lives in
    the concept-space file the run started from.
    """
    heads = params.heads
    d = heads.A_vs.shape[0]
    n_frame = heads.A_fs.shape[0]
    n_c = params.space.n_c
    attn = params.temporal.mode == SELF_ATTENTION
    with open(path, "wb") as fh:
        fh.write(CKP_MAGIC)
        flags = [attn, heads.enable_vs, heads.enable_fs, heads.enable_vcsc,
                 heads.enable_fcsc, params.anchor_free]
        fh.write(struct.pack("<IIII6B", 1, d, n_frame, n_c, *[int(b) for b in flags]))
        for block in (params.space.C, heads.A_vs, heads.A_fs, heads.A_vcsc, heads.A_fcsc):
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())
        if attn:
            for block in (params.temporal.W_q, params.temporal.W_k, params.temporal.W_v,
                          params.temporal.W_o, params.temporal.pos):
                fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())
        fh.write(struct.pack("<d", params.logit_scale.log_value))
        cfg_bytes = json.dumps(config_to_dict(cfg), sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(cfg_bytes)))
        fh.write(cfg_bytes)


def load_checkpoint(path, assignment: np.ndarray | None = None) -> tuple[ModelParams, TrainConfig]:
    """Read a checkpoint; pair it with the assignment from its concept file."""
    with open(path, "rb") as fh:
        reader = store._Reader(fh.read(), path)
    magic = reader.take(8)
    if magic != CKP_MAGIC:
        raise BadMagicError(f"{path}: expected {CKP_MAGIC!r}, found {magic!r}")
    version, d, n_frame, n_c, attn, e_vs, e_fs, e_vcsc, e_fcsc, anchor_free = reader.unpack(
        "<IIII6B"
    )
    if version != 1:
        raise ValidationError(f"{path}: unsupported version {version}")

    def f64(shape):
        count = int(np.prod(shape))
        raw = reader.take(8 * count)
        return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()

    C = f64((n_c, d))
    A_vs, A_fs = f64((d, d)), f64((n_frame, n_frame))
    A_vcsc, A_fcsc = f64((d, d)), f64((n_frame, n_frame))
    if attn:
        temporal = TemporalParams(
            mode=SELF_ATTENTION,
            W_q=f64((d, d)),
            W_k=f64((d, d)),
            W_v=f64((d, d)),
            W_o=f64((d, d)),
            pos=f64((n_frame, d)),
        )
    else:
        temporal = TemporalParams(mode=MEAN_POOL)
    (log_scale,) = reader.unpack("<d")
    (cfg_len,) = reader.unpack("<I")
    cfg = config_from_dict(json.loads(reader.take(cfg_len).decode("utf-8")))
    reader.finish()

    space = ConceptSpace(
        C=C,
        assignment=assignment if assignment is not None else np.zeros(0, dtype=np.int64),
    )
    params = ModelParams(
        space=space,
        heads=SimilarityHeads(
            A_vs=A_vs, A_fs=A_fs, A_vcsc=A_vcsc, A_fcsc=A_fcsc,
            enable_vs=bool(e_vs), enable_fs=bool(e_fs),
            enable_vcsc=bool(e_vcsc), enable_fcsc=bool(e_fcsc),
        ),
        temporal=temporal,
        logit_scale=LogitScale(log_value=log_scale),
        anchor_free=bool(anchor_free),
    )
    return params, cfg
