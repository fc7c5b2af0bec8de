"""Aggregation of per-frame embeddings into one video representation.

Two modes: plain column-wise mean pooling, and a single self-attention layer
with learned position embeddings, a residual connection, and mean pooling on
top. The attention output projection is zero-initialized so a fresh model
starts exactly at the mean-pool baseline and training moves it away only if
the data rewards it.

``aggregate_frames`` is written against the autodiff functional ops and
therefore works on numpy arrays (inference) and Tensors (training) alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DimMismatchError
from .rng import SplitMix64

MEAN_POOL = "mean_pool"
SELF_ATTENTION = "self_attention"


@dataclass
class TemporalParams:
    mode: str
    W_q: np.ndarray | None = None  # (d, d)
    W_k: np.ndarray | None = None
    W_v: np.ndarray | None = None
    W_o: np.ndarray | None = None
    pos: np.ndarray | None = None  # (n_frame, d)


def init_temporal_params(mode: str, d: int, n_frame: int, seed: int) -> TemporalParams:
    if mode == MEAN_POOL:
        return TemporalParams(mode=MEAN_POOL)
    if mode != SELF_ATTENTION:
        raise ConfigError(f"unknown temporal mode {mode!r}")
    rng = SplitMix64(seed)
    scale = 1.0 / math.sqrt(d)

    def gauss(rows, cols):
        return np.array(rng.normals(rows * cols)).reshape(rows, cols) * scale

    return TemporalParams(
        mode=SELF_ATTENTION,
        W_q=gauss(d, d),
        W_k=gauss(d, d),
        W_v=gauss(d, d),
        W_o=np.zeros((d, d)),
        pos=np.zeros((n_frame, d)),
    )


def aggregate_frames(params: TemporalParams, r_f):
    """Collapse an (n_frame, d) block into a single d-vector.

    Accepts a numpy array or an autodiff Tensor for ``r_f``; attention
    weights in ``params`` may likewise be arrays or Tensors.
    """
    shape = r_f.shape if not hasattr(r_f, "value") else r_f.value.shape
    if len(shape) != 2:
        raise DimMismatchError(f"frame block must be 2-D, got {shape}")
    if params.mode == MEAN_POOL:
        return ad.mean_axis0(r_f)
    if params.mode != SELF_ATTENTION:
        raise ConfigError(f"unknown temporal mode {params.mode!r}")
    d = shape[1]
    h = ad.add(r_f, params.pos)
    q = ad.matmul(h, params.W_q)
    k = ad.matmul(h, params.W_k)
    v = ad.matmul(h, params.W_v)
    attn = ad.row_softmax(ad.mul(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(d)))
    projected = ad.matmul(ad.matmul(attn, v), params.W_o)
    return ad.mean_axis0(ad.add(h, projected))
