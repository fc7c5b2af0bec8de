import numpy as np
import pytest

from svta.concepts import (
    ConceptSpace,
    anchor_free_sentence_rep,
    caption_weight_matrix,
    init_concepts,
    kmeans,
    read_concepts,
    sentence_concept_counts,
    sparse_frame_reps,
    sparse_sentence_rep,
    sparse_video_rep,
    word_to_concept,
    write_concepts,
)
from svta.errors import (
    ConfigError,
    DegenerateSimilarityError,
    EmptySentenceError,
    UnknownWordError,
    ZeroVectorError,
)
from svta.store import Vocabulary


def brute_force_two_clusters(points: np.ndarray) -> float:
    """Minimum inertia over every 2-partition (the independent oracle)."""
    n = points.shape[0]
    best = np.inf
    for mask_bits in range(1, 2 ** (n - 1)):
        mask = np.array([(mask_bits >> i) & 1 for i in range(n)], dtype=bool)
        inertia = 0.0
        for side in (mask, ~mask):
            if side.any():
                center = points[side].mean(axis=0)
                inertia += float(((points[side] - center) ** 2).sum())
        best = min(best, inertia)
    return best


def make_space(n_c=3, d=4, n_words=10, seed=0) -> ConceptSpace:
    rng = np.random.default_rng(seed)
    return ConceptSpace(
        C=rng.normal(size=(n_c, d)),
        assignment=rng.integers(0, n_c, size=n_words).astype(np.int64),
    )


class TestKMeans:
    def test_k_equals_n_points_zero_inertia(self):
        corners = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        centers, labels, history = kmeans(corners, 4, seed=5)
        assert history[-1] == pytest.approx(0.0, abs=1e-12)
        assert sorted(map(tuple, centers)) == sorted(map(tuple, corners))
        assert len(set(labels.tolist())) == 4

    def test_single_cluster_is_mean(self):
        rng = np.random.default_rng(1)
        points = rng.normal(size=(20, 3))
        centers, labels, _ = kmeans(points, 1, seed=0)
        np.testing.assert_allclose(centers[0], points.mean(axis=0), atol=1e-12)
        assert set(labels.tolist()) == {0}

    def test_two_blobs_match_brute_force(self):
        rng = np.random.default_rng(2)
        blob_a = rng.normal(size=(3, 2)) * 0.05 + np.array([5.0, 5.0])
        blob_b = rng.normal(size=(3, 2)) * 0.05 + np.array([-5.0, -5.0])
        points = np.vstack([blob_a, blob_b])
        centers, labels, history = kmeans(points, 2, seed=0)
        assert history[-1] == pytest.approx(brute_force_two_clusters(points), abs=1e-9)
        found = sorted(map(tuple, np.round(centers, 6)))
        expected = sorted(map(tuple, np.round(
            np.vstack([blob_a.mean(axis=0), blob_b.mean(axis=0)]), 6)))
        assert found == expected

    def test_inertia_non_increasing(self):
        rng = np.random.default_rng(3)
        for seed in range(5):
            points = rng.normal(size=(40, 6))
            _, _, history = kmeans(points, 5, seed=seed)
            assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_bad_k(self):
        points = np.zeros((4, 2))
        with pytest.raises(ConfigError):
            kmeans(points, 0, seed=0)
        with pytest.raises(ConfigError):
            kmeans(points, 5, seed=0)

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        points = rng.normal(size=(30, 4))
        c1, l1, h1 = kmeans(points, 4, seed=11)
        c2, l2, h2 = kmeans(points, 4, seed=11)
        np.testing.assert_array_equal(c1, c2)
        np.testing.assert_array_equal(l1, l2)
        assert h1 == h2


class TestInitConcepts:
    def test_every_word_assigned(self):
        rng = np.random.default_rng(5)
        vocab = Vocabulary(
            tokens=[f"t{i}" for i in range(25)], embeddings=rng.normal(size=(25, 4))
        )
        space = init_concepts(vocab, 6, seed=1)
        assert space.assignment.shape == (25,)
        assert space.assignment.max() < 6
        assert space.C.shape == (6, 4)

    def test_nc_bounds(self):
        vocab = Vocabulary(tokens=["a", "b"], embeddings=np.eye(2))
        with pytest.raises(ConfigError):
            init_concepts(vocab, 3, seed=0)


class TestWordToConcept:
    def test_one_hot(self):
        space = make_space()
        space.assignment[4] = 2
        onehot = word_to_concept(space, 4)
        assert onehot.sum() == 1.0
        assert onehot[2] == 1.0

    def test_out_of_range(self):
        space = make_space()
        with pytest.raises(UnknownWordError):
            word_to_concept(space, 10)

    def test_sum_over_vocab_gives_cluster_sizes(self):
        space = make_space(n_c=4, n_words=30, seed=7)
        total = sum(word_to_concept(space, w) for w in range(space.n_words))
        expected = np.bincount(space.assignment, minlength=4).astype(float)
        np.testing.assert_array_equal(total, expected)


class TestSentenceOps:
    def test_counts_single_word(self):
        space = make_space()
        space.assignment[3] = 2
        np.testing.assert_array_equal(
            sentence_concept_counts(space, [3]), word_to_concept(space, 3)
        )

    def test_counts_two_words_same_cluster(self):
        space = make_space()
        space.assignment[1] = space.assignment[2] = 0
        counts = sentence_concept_counts(space, [1, 2])
        assert counts[0] == 2.0 and counts.sum() == 2.0

    def test_counts_order_invariant_and_sum(self):
        space = make_space(n_c=5, n_words=20, seed=9)
        tokens = [3, 7, 7, 1, 12]
        a = sentence_concept_counts(space, tokens)
        b = sentence_concept_counts(space, list(reversed(tokens)))
        np.testing.assert_array_equal(a, b)
        assert a.sum() == len(tokens)

    def test_rep_single_word_is_center(self):
        space = make_space()
        j = space.assignment[5]
        np.testing.assert_allclose(sparse_sentence_rep(space, [5]), space.C[j], atol=1e-12)

    def test_rep_two_words_mean_of_centers(self):
        space = make_space()
        space.assignment[1], space.assignment[2] = 0, 2
        expected = (space.C[0] + space.C[2]) / 2.0
        np.testing.assert_allclose(sparse_sentence_rep(space, [1, 2]), expected, atol=1e-12)

    def test_empty_sentence(self):
        with pytest.raises(EmptySentenceError):
            sparse_sentence_rep(make_space(), [])

    def test_unknown_word(self):
        with pytest.raises(UnknownWordError):
            sparse_sentence_rep(make_space(), [55])

    def test_rep_in_convex_envelope_of_used_centers(self):
        space = make_space(n_c=6, n_words=40, seed=13)
        rng = np.random.default_rng(0)
        for _ in range(10):
            tokens = rng.integers(0, 40, size=5).tolist()
            rep = sparse_sentence_rep(space, tokens)
            used = space.C[sorted({space.assignment[t] for t in tokens})]
            assert np.all(rep >= used.min(axis=0) - 1e-12)
            assert np.all(rep <= used.max(axis=0) + 1e-12)

    def test_caption_weight_matrix_rows(self):
        space = make_space(n_c=4, n_words=15, seed=3)
        lists = [[0, 1], [2, 2, 3]]
        weights = caption_weight_matrix(space, lists)
        np.testing.assert_allclose(
            weights[0], sentence_concept_counts(space, lists[0]) / 2.0
        )
        np.testing.assert_allclose(
            weights[1], sentence_concept_counts(space, lists[1]) / 3.0
        )


def scalar_loop_projection(C: np.ndarray, x: np.ndarray):
    """Entry-by-entry evaluation of the cosine-weighted combination."""
    n_c = C.shape[0]
    sims = np.zeros(n_c)
    for j in range(n_c):
        sims[j] = float(x @ C[j]) / (np.linalg.norm(x) * np.linalg.norm(C[j]))
    rep = np.zeros(C.shape[1])
    for j in range(n_c):
        rep += sims[j] * C[j]
    return sims, rep / np.abs(sims).sum()


class TestVideoAndFrameProjections:
    def test_orthonormal_one_hot(self):
        space = ConceptSpace(C=np.eye(4)[:3], assignment=np.zeros(5, dtype=np.int64))
        rep, sims = sparse_video_rep(space, space.C[1])
        np.testing.assert_allclose(sims, [0.0, 1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(rep, space.C[1], atol=1e-12)

    def test_scale_invariance(self):
        space = make_space(seed=17)
        v = np.random.default_rng(5).normal(size=4)
        rep1, sims1 = sparse_video_rep(space, v)
        rep2, sims2 = sparse_video_rep(space, 2.0 * v)
        np.testing.assert_allclose(rep1, rep2, atol=1e-12)
        np.testing.assert_allclose(sims1, sims2, atol=1e-12)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(6)
        space = ConceptSpace(C=rng.normal(size=(3, 4)), assignment=np.zeros(5, dtype=np.int64))
        v = rng.normal(size=4)
        rep, sims = sparse_video_rep(space, v)
        oracle_sims, oracle_rep = scalar_loop_projection(space.C, v)
        np.testing.assert_allclose(sims, oracle_sims, atol=1e-12)
        np.testing.assert_allclose(rep, oracle_rep, atol=1e-12)

    def test_zero_vector(self):
        with pytest.raises(ZeroVectorError):
            sparse_video_rep(make_space(), np.zeros(4))

    def test_degenerate_l1(self):
        # Antipodal concepts make the two cosine terms cancel exactly.
        C = np.array([[1.0, 0.0], [-1.0, 0.0]])
        space = ConceptSpace(C=C, assignment=np.zeros(2, dtype=np.int64))
        with pytest.raises(DegenerateSimilarityError):
            sparse_video_rep(space, np.array([0.0, 1.0]))

    def test_single_frame_reduces_to_video_projection(self):
        space = make_space(seed=19)
        frame = np.random.default_rng(7).normal(size=4)
        reps, sims = sparse_frame_reps(space, frame[None, :])
        rep_v, sims_v = sparse_video_rep(space, frame)
        np.testing.assert_allclose(reps[0], rep_v, atol=1e-12)
        np.testing.assert_allclose(sims[0], sims_v, atol=1e-12)

    def test_frame_permutation_equivariance(self):
        space = make_space(seed=23)
        frames = np.random.default_rng(8).normal(size=(4, 4))
        perm = [2, 0, 3, 1]
        reps, sims = sparse_frame_reps(space, frames)
        reps_p, sims_p = sparse_frame_reps(space, frames[perm])
        np.testing.assert_allclose(reps_p, reps[perm], atol=1e-12)
        np.testing.assert_allclose(sims_p, sims[perm], atol=1e-12)

    def test_frames_match_scalar_loop_rowwise(self):
        rng = np.random.default_rng(9)
        space = ConceptSpace(C=rng.normal(size=(3, 4)), assignment=np.zeros(5, dtype=np.int64))
        frames = rng.normal(size=(3, 4))
        reps, sims = sparse_frame_reps(space, frames)
        for i in range(3):
            oracle_sims, oracle_rep = scalar_loop_projection(space.C, frames[i])
            np.testing.assert_allclose(sims[i], oracle_sims, atol=1e-12)
            np.testing.assert_allclose(reps[i], oracle_rep, atol=1e-12)


class TestAnchorFreeSentenceRep:
    def test_center_recovers_center(self):
        space = ConceptSpace(C=np.eye(4)[:3], assignment=np.zeros(5, dtype=np.int64))
        np.testing.assert_allclose(
            anchor_free_sentence_rep(space, space.C[2]), space.C[2], atol=1e-12
        )

    def test_scale_invariant(self):
        space = make_space(seed=29)
        s = np.random.default_rng(10).normal(size=4)
        np.testing.assert_allclose(
            anchor_free_sentence_rep(space, s),
            anchor_free_sentence_rep(space, 3.0 * s),
            atol=1e-12,
        )

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(11)
        space = ConceptSpace(C=rng.normal(size=(4, 5)), assignment=np.zeros(6, dtype=np.int64))
        s = rng.normal(size=5)
        _, oracle_rep = scalar_loop_projection(space.C, s)
        np.testing.assert_allclose(anchor_free_sentence_rep(space, s), oracle_rep, atol=1e-12)


class TestConceptPersistence:
    def test_roundtrip(self, tmp_path):
        space = make_space(n_c=5, d=3, n_words=17, seed=31)
        path = tmp_path / "c.bin"
        write_concepts(space, path)
        back = read_concepts(path)
        np.testing.assert_allclose(back.C, space.C, rtol=1e-6, atol=1e-6)
        np.testing.assert_array_equal(back.assignment, space.assignment)

    def test_deterministic_bytes(self, tmp_path):
        space = make_space(seed=37)
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        write_concepts(space, p1)
        write_concepts(space, p2)
        assert p1.read_bytes() == p2.read_bytes()
