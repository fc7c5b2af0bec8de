import math
from dataclasses import dataclass

import numpy as np
import pytest

from svta import autodiff as ad
from svta.concepts import ConceptSpace, sparse_frame_reps, sparse_sentence_rep, sparse_video_rep
from svta.errors import ConfigError, DimMismatchError, NoHeadsEnabledError
from svta.numerics import finite_diff_gradient, l2_normalize, l2_normalize_rows, row_softmax
from svta.similarity import (
    SimilarityHeads,
    batch_frame_sentence_scores,
    batch_similarity_matrix,
    batch_video_sentence_scores,
    init_heads,
    inverted_softmax,
    overall_similarity,
    sim_frame_sentence,
    sim_video_sentence,
)
from svta.temporal import MEAN_POOL, TemporalParams, aggregate_frames

# All ten head-enable combinations of the similarity ablation.
ALL_COMBOS = [
    (True, False, False, False),
    (True, False, True, False),
    (False, True, False, False),
    (False, True, False, True),
    (True, False, False, True),
    (False, True, True, False),
    (True, True, False, False),
    (True, True, True, False),
    (True, True, False, True),
    (True, True, True, True),
]


@dataclass
class ToyModel:
    space: ConceptSpace
    heads: SimilarityHeads
    temporal: TemporalParams
    anchor_free: bool = False


def make_model(seed=0, d=4, n_frame=3, n_c=3, n_words=12, flags=(True,) * 4) -> ToyModel:
    rng = np.random.default_rng(seed)
    space = ConceptSpace(
        C=rng.normal(size=(n_c, d)),
        assignment=rng.integers(0, n_c, size=n_words).astype(np.int64),
    )
    heads = SimilarityHeads(
        A_vs=rng.normal(size=(d, d)),
        A_fs=rng.normal(size=(n_frame, n_frame)),
        A_vcsc=rng.normal(size=(d, d)),
        A_fcsc=rng.normal(size=(n_frame, n_frame)),
        enable_vs=flags[0],
        enable_fs=flags[1],
        enable_vcsc=flags[2],
        enable_fcsc=flags[3],
    )
    return ToyModel(space=space, heads=heads, temporal=TemporalParams(mode=MEAN_POOL))


def make_batch(model, n_videos, n_texts, seed=1):
    rng = np.random.default_rng(seed)
    d = model.space.d
    videos = [rng.normal(size=(model.heads.A_fs.shape[0], d)) for _ in range(n_videos)]
    texts = [
        (rng.normal(size=d), rng.integers(0, model.space.n_words, size=3).tolist())
        for _ in range(n_texts)
    ]
    return videos, texts


class TestVideoSentenceHead:
    def test_identity_unit_vectors(self):
        v = l2_normalize(np.array([1.0, 2.0, 2.0, 0.0]))
        assert sim_video_sentence(v, v, np.eye(4)) == pytest.approx(1.0, abs=1e-12)

    def test_zero_matrix(self):
        rng = np.random.default_rng(0)
        assert sim_video_sentence(rng.normal(size=4), rng.normal(size=4), np.zeros((4, 4))) == 0.0

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(1)
        v, s, A = rng.normal(size=4), rng.normal(size=4), rng.normal(size=(4, 4))
        oracle = sum(v[i] * A[i, j] * s[j] for i in range(4) for j in range(4))
        assert sim_video_sentence(v, s, A) == pytest.approx(oracle, abs=1e-12)

    def test_bilinearity(self):
        rng = np.random.default_rng(2)
        A = rng.normal(size=(5, 5))
        u, v, s = rng.normal(size=5), rng.normal(size=5), rng.normal(size=5)
        a, b = 1.7, -0.3
        left = sim_video_sentence(a * u + b * v, s, A)
        right = a * sim_video_sentence(u, s, A) + b * sim_video_sentence(v, s, A)
        assert left == pytest.approx(right, abs=1e-10)
        left = sim_video_sentence(s, a * u + b * v, A)
        right = a * sim_video_sentence(s, u, A) + b * sim_video_sentence(s, v, A)
        assert left == pytest.approx(right, abs=1e-10)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatchError):
            sim_video_sentence(np.ones(3), np.ones(4), np.eye(4))


class TestFrameSentenceHead:
    def test_single_frame_scalar_weight(self):
        rng = np.random.default_rng(3)
        f, s = rng.normal(size=(1, 4)), rng.normal(size=4)
        assert sim_frame_sentence(f, s, np.eye(1)) == pytest.approx(float(f[0] @ s), abs=1e-12)

    def test_identical_frames_uniform_weights(self):
        rng = np.random.default_rng(4)
        f_row, s = rng.normal(size=4), rng.normal(size=4)
        frames = np.tile(f_row, (3, 1))
        assert sim_frame_sentence(frames, s, np.eye(3)) == pytest.approx(
            float(f_row @ s), abs=1e-12
        )

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(5)
        frames, s, A = rng.normal(size=(3, 4)), rng.normal(size=4), rng.normal(size=(3, 3))
        dots = np.array([float(frames[i] @ s) for i in range(3)])
        exp = np.exp(dots - dots.max())
        weights = exp / exp.sum()
        oracle = sum(
            weights[i] * A[i, j] * dots[j] for i in range(3) for j in range(3)
        )
        assert sim_frame_sentence(frames, s, A) == pytest.approx(oracle, abs=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatchError):
            sim_frame_sentence(np.ones((3, 4)), np.ones(4), np.eye(2))


class TestOverallSimilarity:
    def _inputs(self, model, seed=6):
        rng = np.random.default_rng(seed)
        d = model.space.d
        n_frame = model.heads.A_fs.shape[0]
        r_f = rng.normal(size=(n_frame, d))
        r_v = aggregate_frames(model.temporal, r_f)
        r_s = rng.normal(size=d)
        tokens = [1, 4, 2]
        r_vc, _ = sparse_video_rep(model.space, r_v)
        r_fc, _ = sparse_frame_reps(model.space, r_f)
        r_sc = sparse_sentence_rep(model.space, tokens)
        return r_v, r_f, r_s, r_vc, r_fc, r_sc

    def test_all_heads_equal_value(self):
        model = make_model(seed=7)
        bundle = overall_similarity(model.heads, *self._inputs(model))
        values = [bundle.s_vs, bundle.s_fs, bundle.s_vcsc, bundle.s_fcsc]
        assert bundle.overall == pytest.approx(float(np.mean(values)), abs=1e-12)

    def test_mean_of_two_dense_heads(self):
        model = make_model(seed=8, flags=(True, True, False, False))
        bundle = overall_similarity(model.heads, *self._inputs(model))
        assert bundle.s_vcsc is None and bundle.s_fcsc is None
        assert bundle.overall == pytest.approx((bundle.s_vs + bundle.s_fs) / 2.0, abs=1e-12)

    def test_no_heads(self):
        model = make_model(seed=9, flags=(False, False, False, False))
        with pytest.raises(NoHeadsEnabledError):
            overall_similarity(model.heads, *self._inputs(model))

    def test_overall_mean_literal(self):
        # (1+2+3+4)/4 = 2.5 for four enabled heads.
        values = [1.0, 2.0, 3.0, 4.0]
        assert float(np.mean(values)) == pytest.approx(2.5)


def loop_oracle_matrix(model, videos, texts) -> np.ndarray:
    """Per-pair double loop through overall_similarity (the reference path)."""
    S = np.zeros((len(videos), len(texts)))
    for i, frames in enumerate(videos):
        r_v = aggregate_frames(model.temporal, frames)
        r_vc, _ = sparse_video_rep(model.space, r_v)
        r_fc, _ = sparse_frame_reps(model.space, frames)
        for j, (sentence, tokens) in enumerate(texts):
            if model.anchor_free:
                from svta.concepts import anchor_free_sentence_rep

                r_sc = anchor_free_sentence_rep(model.space, sentence)
            else:
                r_sc = sparse_sentence_rep(model.space, tokens)
            S[i, j] = overall_similarity(
                model.heads, r_v, frames, sentence, r_vc, r_fc, r_sc
            ).overall
    return S


class TestBatchSimilarityMatrix:
    def test_one_by_one_equals_per_pair(self):
        model = make_model(seed=10)
        videos, texts = make_batch(model, 1, 1, seed=11)
        S = batch_similarity_matrix(model, videos, texts)
        np.testing.assert_allclose(S, loop_oracle_matrix(model, videos, texts), atol=1e-12)

    def test_text_permutation_permutes_columns(self):
        model = make_model(seed=12)
        videos, texts = make_batch(model, 4, 4, seed=13)
        S = batch_similarity_matrix(model, videos, texts)
        perm = [2, 0, 3, 1]
        S_p = batch_similarity_matrix(model, videos, [texts[j] for j in perm])
        np.testing.assert_allclose(S_p, S[:, perm], atol=1e-12)

    @pytest.mark.parametrize("flags", ALL_COMBOS)
    def test_eight_by_eight_matches_loop_oracle_all_combos(self, flags):
        model = make_model(seed=14, flags=flags)
        videos, texts = make_batch(model, 8, 8, seed=15)
        S = batch_similarity_matrix(model, videos, texts)
        np.testing.assert_allclose(
            S, loop_oracle_matrix(model, videos, texts), atol=1e-10
        )

    def test_anchor_free_matches_loop_oracle(self):
        model = make_model(seed=16)
        model.anchor_free = True
        videos, texts = make_batch(model, 5, 5, seed=17)
        S = batch_similarity_matrix(model, videos, texts)
        np.testing.assert_allclose(S, loop_oracle_matrix(model, videos, texts), atol=1e-10)


class TestHeadGradients:
    def test_batched_heads_match_finite_differences(self):
        rng = np.random.default_rng(18)
        d, n_frame, n = 4, 3, 3
        R_v = l2_normalize_rows(rng.normal(size=(n, d)))
        R_s = l2_normalize_rows(rng.normal(size=(n, d)))
        frames = [l2_normalize_rows(rng.normal(size=(n_frame, d))) for _ in range(n)]
        probe = rng.normal(size=(n, n))

        for name, build, shape in [
            (
                "A_vs",
                lambda A: batch_video_sentence_scores(R_v, R_s, A),
                (d, d),
            ),
            (
                "A_fs",
                lambda A: batch_frame_sentence_scores(frames, R_s, A),
                (n_frame, n_frame),
            ),
        ]:
            A0 = rng.normal(size=shape)
            tensor = ad.parameter(A0)
            out = ad.sum_all(ad.mul(build(tensor), probe))
            out.backward()
            numeric = finite_diff_gradient(
                lambda x: float((build(x) * probe).sum()), A0.copy(), h=1e-4
            )
            denom = np.maximum(1e-6, np.maximum(np.abs(tensor.grad), np.abs(numeric)))
            rel = (np.abs(tensor.grad - numeric) / denom).max()
            assert rel < 1e-4, f"{name}: rel err {rel:.3e}"


class TestInvertedSoftmax:
    def test_singleton(self):
        np.testing.assert_allclose(inverted_softmax(np.array([[5.0]])), [[1.0]], atol=1e-15)

    def test_symmetric_input_symmetric_output(self):
        S = np.array([[1.0, 0.2], [0.2, 1.0]])
        out = inverted_softmax(S, tau=3.0)
        np.testing.assert_allclose(out, out.T, atol=1e-15)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(19)
        S = rng.normal(size=(3, 3))
        tau = 100.0
        expected = row_softmax(tau * S) * row_softmax((tau * S).T).T
        np.testing.assert_allclose(inverted_softmax(S, tau), expected, atol=1e-12)

    def test_additive_shift_invariance(self):
        rng = np.random.default_rng(20)
        S = rng.normal(size=(4, 5))
        for c in (-3.0, 0.5, 12.0):
            np.testing.assert_allclose(
                inverted_softmax(S + c, tau=7.0), inverted_softmax(S, tau=7.0), atol=1e-12
            )

    def test_tau_validation(self):
        with pytest.raises(ConfigError):
            inverted_softmax(np.eye(2), tau=0.0)


def test_init_heads_identity_start():
    heads = init_heads(4, 3)
    np.testing.assert_array_equal(heads.A_vs, np.eye(4))
    np.testing.assert_array_equal(heads.A_fs, np.eye(3))
    with pytest.raises(NoHeadsEnabledError):
        init_heads(4, 3, enable_vs=False, enable_fs=False, enable_vcsc=False, enable_fcsc=False)
