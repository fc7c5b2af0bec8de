"""Shared builders for trainer/acceptance tests."""

import copy

import numpy as np

from svta.concepts import init_concepts
from svta.synth import SynthConfig, generate_aligned_dataset
from svta.trainer import ModelParams, TrainConfig, init_model_params

PARAM_BLOCK_NAMES = (
    "concepts", "a_vs", "a_fs", "a_vcsc", "a_fcsc",
    "w_q", "w_k", "w_v", "w_o", "pos", "log_scale",
)


def small_problem(seed=5, n_pairs=4, d=6, n_frame=3, vocab=10, n_c=4, noise=0.2):
    """Tiny synthetic dataset plus freshly initialized model parameters."""
    synth = SynthConfig(
        n_pairs=n_pairs, d=d, n_frame=n_frame, vocab_size=vocab,
        words_per_caption=3, noise_sigma=noise, seed=seed,
    )
    dataset, vocab_obj = generate_aligned_dataset(synth)
    space = init_concepts(vocab_obj, n_c, seed=seed + 1)
    cfg = TrainConfig(seed=seed + 2)
    params = init_model_params(space, dataset.d, dataset.n_frame, cfg)
    return dataset, vocab_obj, space, params


def randomize_params(params: ModelParams, seed=42, scale=0.5) -> ModelParams:
    """Random nonzero values in every block so no gradient path is dead."""
    rng = np.random.default_rng(seed)
    d = params.heads.A_vs.shape[0]
    nf = params.heads.A_fs.shape[0]
    params.heads.A_vs = rng.normal(size=(d, d)) * scale
    params.heads.A_fs = rng.normal(size=(nf, nf)) * scale
    params.heads.A_vcsc = rng.normal(size=(d, d)) * scale
    params.heads.A_fcsc = rng.normal(size=(nf, nf)) * scale
    if params.temporal.mode == "self_attention":
        params.temporal.W_q = rng.normal(size=(d, d)) * scale
        params.temporal.W_k = rng.normal(size=(d, d)) * scale
        params.temporal.W_v = rng.normal(size=(d, d)) * scale
        params.temporal.W_o = rng.normal(size=(d, d)) * scale
        params.temporal.pos = rng.normal(size=(nf, d)) * scale * 0.5
    params.logit_scale.log_value = 1.2
    return params


def get_block(params: ModelParams, name: str) -> np.ndarray:
    return {
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
    }[name]()


def with_block(params: ModelParams, name: str, value: np.ndarray) -> ModelParams:
    out = copy.deepcopy(params)
    if name == "concepts":
        out.space.C = value
    elif name == "a_vs":
        out.heads.A_vs = value
    elif name == "a_fs":
        out.heads.A_fs = value
    elif name == "a_vcsc":
        out.heads.A_vcsc = value
    elif name == "a_fcsc":
        out.heads.A_fcsc = value
    elif name == "w_q":
        out.temporal.W_q = value
    elif name == "w_k":
        out.temporal.W_k = value
    elif name == "w_v":
        out.temporal.W_v = value
    elif name == "w_o":
        out.temporal.W_o = value
    elif name == "pos":
        out.temporal.pos = value
    elif name == "log_scale":
        out.logit_scale.log_value = float(value)
    else:
        raise KeyError(name)
    return out


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1e-6, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / denom).max())
