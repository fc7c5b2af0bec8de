"""Multi-grained similarity heads and batched score matrices.

Four heads, each a learnable bilinear form:

* video-sentence, dense:      r_v  A_vs   r_s^T
* frame-sentence, dense:      softmax(r_s r_f^T)  A_fs  (r_f r_s^T)
* video-sentence, sparse:     r_vc A_vcsc r_sc^T
* frame-sentence, sparse:     softmax(r_sc r_fc^T) A_fcsc (r_fc r_sc^T)

The frame heads weight frames by how well they match the sentence before
scoring them, so a single discriminative frame can carry the pair. The
overall score is the arithmetic mean of the enabled heads.

Dense inputs are unit-normalized before entering any head; sparse inputs are
used as produced by the concept projections. The batched helpers are written
against the autodiff ops so the training graph reuses them with Tensors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .concepts import caption_weight_matrix, project_rows_to_concepts
from .errors import ConfigError, DimMismatchError, NoHeadsEnabledError
from .numerics import as_matrix, as_vector, l2_normalize, l2_normalize_rows, row_softmax
from .temporal import aggregate_frames

HEAD_NAMES = ("vs", "fs", "vcsc", "fcsc")


@dataclass
class SimilarityHeads:
    A_vs: np.ndarray  # (d, d)
    A_fs: np.ndarray  # (n_frame, n_frame)
    A_vcsc: np.ndarray  # (d, d)
    A_fcsc: np.ndarray  # (n_frame, n_frame)
    enable_vs: bool = True
    enable_fs: bool = True
    enable_vcsc: bool = True
    enable_fcsc: bool = True

    def enabled_flags(self) -> tuple[bool, bool, bool, bool]:
        return (self.enable_vs, self.enable_fs, self.enable_vcsc, self.enable_fcsc)

    def check(self) -> None:
        if not any(self.enabled_flags()):
            raise NoHeadsEnabledError("at least one similarity head must be enabled")


def init_heads(
    d: int,
    n_frame: int,
    enable_vs: bool = True,
    enable_fs: bool = True,
    enable_vcsc: bool = True,
    enable_fcsc: bool = True,
) -> SimilarityHeads:
    """Identity-initialized heads: training starts from dot-product scoring."""
    heads = SimilarityHeads(
        A_vs=np.eye(d),
        A_fs=np.eye(n_frame),
        A_vcsc=np.eye(d),
        A_fcsc=np.eye(n_frame),
        enable_vs=enable_vs,
        enable_fs=enable_fs,
        enable_vcsc=enable_vcsc,
        enable_fcsc=enable_fcsc,
    )
    heads.check()
    return heads


@dataclass
class SimilarityBundle:
    """Per-pair head values (None when a head is disabled) and their mean."""

    s_vs: float | None
    s_fs: float | None
    s_vcsc: float | None
    s_fcsc: float | None
    overall: float


# ---------------------------------------------------------------------------
# Per-pair heads
# ---------------------------------------------------------------------------

def sim_video_sentence(r_v, r_s, A) -> float:
    """Bilinear form r_v A r_s^T. No normalization happens here."""
    r_v = as_vector(r_v, "r_v")
    r_s = as_vector(r_s, "r_s")
    A = as_matrix(A, "A")
    if A.shape != (r_v.size, r_s.size):
        raise DimMismatchError(f"A shape {A.shape} incompatible with ({r_v.size}, {r_s.size})")
    return float(r_v @ A @ r_s)


def sim_frame_sentence(r_f, r_s, A) -> float:
    """Instance-aware weighted frame scoring: softmax(r_s r_f^T) A (r_f r_s^T)."""
    r_f = as_matrix(r_f, "r_f")
    r_s = as_vector(r_s, "r_s")
    A = as_matrix(A, "A")
    n_frame = r_f.shape[0]
    if r_f.shape[1] != r_s.size:
        raise DimMismatchError(f"frames d={r_f.shape[1]} vs sentence d={r_s.size}")
    if A.shape != (n_frame, n_frame):
        raise DimMismatchError(f"A shape {A.shape} != ({n_frame}, {n_frame})")
    weights = row_softmax((r_f @ r_s)[None, :])[0]
    return float(weights @ A @ (r_f @ r_s))


def overall_similarity(
    heads: SimilarityHeads,
    r_v,
    r_f,
    r_s,
    r_vc,
    r_fc,
    r_sc,
) -> SimilarityBundle:
    """Mean of the enabled heads for one video-text pair.

    Dense inputs (r_v, r_f rows, r_s) are unit-normalized here; sparse
    inputs are consumed as given.
    """
    heads.check()
    values: dict[str, float | None] = dict.fromkeys(HEAD_NAMES)
    if heads.enable_vs:
        values["vs"] = sim_video_sentence(l2_normalize(r_v), l2_normalize(r_s), heads.A_vs)
    if heads.enable_fs:
        values["fs"] = sim_frame_sentence(
            l2_normalize_rows(r_f), l2_normalize(r_s), heads.A_fs
        )
    if heads.enable_vcsc:
        values["vcsc"] = sim_video_sentence(r_vc, r_sc, heads.A_vcsc)
    if heads.enable_fcsc:
        values["fcsc"] = sim_frame_sentence(r_fc, r_sc, heads.A_fcsc)
    present = [v for v in values.values() if v is not None]
    return SimilarityBundle(
        s_vs=values["vs"],
        s_fs=values["fs"],
        s_vcsc=values["vcsc"],
        s_fcsc=values["fcsc"],
        overall=float(np.mean(present)),
    )


# ---------------------------------------------------------------------------
# Batched scoring (arrays or Tensors)
# ---------------------------------------------------------------------------

def batch_video_sentence_scores(R_v, R_s, A):
    """(N_v, N_t) bilinear scores, rows of R_v against rows of R_s."""
    return ad.matmul(ad.matmul(R_v, A), ad.transpose(R_s))


def batch_frame_sentence_scores(frame_blocks, R_s, A):
    """(N_v, N_t) instance-aware frame scores.

    ``frame_blocks`` is a sequence of per-video (n_frame, d) blocks; for each
    video the weight softmax(r_s r_f^T) and the value A (r_f r_s^T) are
    computed against every sentence at once.
    """
    rows = []
    R_s_T = ad.transpose(R_s)
    for block in frame_blocks:
        products = ad.matmul(block, R_s_T)  # (n_frame, N_t)
        weights = ad.row_softmax(ad.transpose(products))  # (N_t, n_frame)
        values = ad.matmul(A, products)  # (n_frame, N_t)
        rows.append(ad.sum_axis1(ad.mul(weights, ad.transpose(values))))
    return ad.stack_rows(rows)


def combine_head_scores(heads: SimilarityHeads, score_matrices: dict):
    """Arithmetic mean of the enabled heads' (N_v, N_t) score matrices."""
    heads.check()
    enabled = [name for name, on in zip(HEAD_NAMES, heads.enabled_flags()) if on]
    total = score_matrices[enabled[0]]
    for name in enabled[1:]:
        total = ad.add(total, score_matrices[name])
    return ad.mul(total, 1.0 / len(enabled))


def batch_similarity_matrix(
    model,
    videos: Sequence[np.ndarray],
    texts: Sequence[tuple[np.ndarray, Sequence[int]]],
) -> np.ndarray:
    """Overall similarity of every video against every text.

    ``model`` needs attributes ``space``, ``heads``, ``temporal`` and
    ``anchor_free``. ``videos`` holds (n_frame, d) frame blocks; each text is
    a (sentence_embedding, caption_token_ids) pair. Entry (i, j) equals
    ``overall_similarity`` applied to video i and text j.
    """
    heads = model.heads
    heads.check()
    space = model.space
    if len(videos) == 0 or len(texts) == 0:
        raise DimMismatchError("need at least one video and one text")

    frame_blocks = [as_matrix(v, "video frames") for v in videos]
    sentences = np.stack([as_vector(s, "sentence") for s, _ in texts])
    R_s_hat = l2_normalize_rows(sentences)
    R_v = np.stack([aggregate_frames(model.temporal, block) for block in frame_blocks])
    R_v_hat = l2_normalize_rows(R_v)
    frames_hat = [l2_normalize_rows(block) for block in frame_blocks]

    need_sparse = heads.enable_vcsc or heads.enable_fcsc
    scores: dict[str, np.ndarray] = {}
    if heads.enable_vs:
        scores["vs"] = batch_video_sentence_scores(R_v_hat, R_s_hat, heads.A_vs)
    if heads.enable_fs:
        scores["fs"] = batch_frame_sentence_scores(frames_hat, R_s_hat, heads.A_fs)
    if need_sparse:
        _, R_vc = project_rows_to_concepts(space.C, R_v)
        frames_c = [project_rows_to_concepts(space.C, block)[1] for block in frame_blocks]
        if model.anchor_free:
            _, R_sc = project_rows_to_concepts(space.C, sentences)
        else:
            weights = caption_weight_matrix(space, [ids for _, ids in texts])
            R_sc = weights @ space.C
        if heads.enable_vcsc:
            scores["vcsc"] = batch_video_sentence_scores(R_vc, R_sc, heads.A_vcsc)
        if heads.enable_fcsc:
            scores["fcsc"] = batch_frame_sentence_scores(frames_c, R_sc, heads.A_fcsc)
    return combine_head_scores(heads, scores)


def inverted_softmax(S, tau: float = 100.0) -> np.ndarray:
    """Dual-softmax renormalization of a score matrix (inference only).

    S' = row_softmax(tau*S) * column_softmax(tau*S). Sharpens scores that
    dominate both their row and their column, suppressing hub columns.
    """
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    S = as_matrix(S, "S")
    scaled = tau * S
    return row_softmax(scaled) * row_softmax(scaled.T).T
