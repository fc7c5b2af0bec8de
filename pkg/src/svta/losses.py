"""The three training losses and their weighted combination.

* symmetric InfoNCE over the batch score matrix (matched pairs on the
  diagonal), with a trainable logit scale;
* alignment loss: unsquared L2 distances pulling the sparse video and
  mean-frame representations toward the sparse sentence representation;
* sparse-similarity loss: the same distance form applied to the concept
  similarity vectors against the caption-derived target weights.

total = infonce + alpha * alignment + beta * sparse_similarity.

The cores are written against the autodiff ops so the training graph uses
the identical formulas with Tensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DimMismatchError, EmptyBatchError, NonFiniteValueError
from .numerics import as_matrix

MAX_LOGIT_SCALE = 100.0
NORM_EPS = 1e-12


@dataclass
class LossWeights:
    alpha: float = 0.02
    beta: float = 0.01

    def check(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(f"loss weights must be >= 0, got {self.alpha}, {self.beta}")


@dataclass
class LogitScale:
    """Trainable contrastive temperature, stored as log(scale)."""

    log_value: float = field(default_factory=lambda: math.log(MAX_LOGIT_SCALE))

    @property
    def scale(self) -> float:
        return math.exp(self.log_value)

    def clamp(self) -> None:
        """Cap scale at MAX_LOGIT_SCALE; applied after each optimizer step."""
        self.log_value = min(self.log_value, math.log(MAX_LOGIT_SCALE))


def info_nce_core(S, log_scale):
    """Symmetric InfoNCE on a square score matrix; arrays or Tensors."""
    logits = ad.mul(ad.exp(log_scale), S)
    row_term = ad.mean_all(ad.sub(ad.logsumexp_rows(logits), ad.diag_part(logits)))
    logits_t = ad.transpose(logits)
    col_term = ad.mean_all(ad.sub(ad.logsumexp_rows(logits_t), ad.diag_part(logits_t)))
    return ad.add(row_term, col_term)


def info_nce_symmetric(S, scale: LogitScale) -> float:
    """Sum of the video-to-text and text-to-video cross-entropy terms."""
    S = as_matrix(S, "S")
    n, m = S.shape
    if n != m:
        raise DimMismatchError(f"similarity matrix must be square, got {S.shape}")
    return float(info_nce_core(S, np.float64(scale.log_value)))


def residual_norm_core(first, second, target):
    """mean_i( ||first_i - target_i|| + ||second_i - target_i|| ), arrays or Tensors."""
    a = ad.row_l2_norms(ad.sub(first, target), eps=NORM_EPS)
    b = ad.row_l2_norms(ad.sub(second, target), eps=NORM_EPS)
    return ad.mean_all(ad.add(a, b))


def alignment_loss(batch) -> float:
    """Distance of sparse video and mean sparse frame reps to the sparse sentence rep.

    ``batch`` is a sequence of (r_vc vector, r_fc matrix, r_sc vector)
    triples for matched pairs.
    """
    if len(batch) == 0:
        raise EmptyBatchError("alignment_loss needs at least one example")
    R_vc = np.stack([np.asarray(v, dtype=np.float64) for v, _, _ in batch])
    F_bar = np.stack([np.asarray(f, dtype=np.float64).mean(axis=0) for _, f, _ in batch])
    R_sc = np.stack([np.asarray(s, dtype=np.float64) for _, _, s in batch])
    return float(residual_norm_core(R_vc, F_bar, R_sc))


def sparse_similarity_loss(batch) -> float:
    """Distance of video and mean-frame concept similarities to the caption target.

    ``batch`` is a sequence of (sim_v vector, sim_f matrix, target vector)
    triples; the target is the caption's concept-count vector divided by its
    token count, putting it on the same scale as the cosine similarities.
    """
    if len(batch) == 0:
        raise EmptyBatchError("sparse_similarity_loss needs at least one example")
    S_v = np.stack([np.asarray(v, dtype=np.float64) for v, _, _ in batch])
    S_f_bar = np.stack([np.asarray(f, dtype=np.float64).mean(axis=0) for _, f, _ in batch])
    T = np.stack([np.asarray(t, dtype=np.float64) for _, _, t in batch])
    return float(residual_norm_core(S_v, S_f_bar, T))


def total_loss(l_sim: float, l_align: float, l_sparse: float, w: LossWeights) -> float:
    for name, v in (("l_sim", l_sim), ("l_align", l_align), ("l_sparse", l_sparse)):
        if not math.isfinite(v):
            raise NonFiniteValueError(f"{name} is not finite: {v}")
    value = l_sim + w.alpha * l_align + w.beta * l_sparse
    if not math.isfinite(value):
        raise NonFiniteValueError(f"total loss is not finite: {value}")
    return value
