import numpy as np
import pytest

from svta.errors import ConfigError
from svta.store import validate
from svta.synth import SynthConfig, generate_aligned_dataset


def test_determinism_bit_identical():
    cfg = SynthConfig(n_pairs=8, d=6, n_frame=3, vocab_size=20, words_per_caption=3,
                      noise_sigma=0.1, seed=99)
    ds1, vocab1 = generate_aligned_dataset(cfg)
    ds2, vocab2 = generate_aligned_dataset(cfg)
    np.testing.assert_array_equal(vocab1.embeddings, vocab2.embeddings)
    for a, b in zip(ds1.items, ds2.items):
        assert a.caption_token_ids == b.caption_token_ids
        np.testing.assert_array_equal(a.frame_embeddings, b.frame_embeddings)
        np.testing.assert_array_equal(a.sentence_embedding, b.sentence_embedding)


def test_noiseless_single_word_single_frame():
    cfg = SynthConfig(n_pairs=5, d=8, n_frame=1, vocab_size=10, words_per_caption=1,
                      noise_sigma=0.0, seed=3)
    ds, vocab = generate_aligned_dataset(cfg)
    for item in ds.items:
        np.testing.assert_array_equal(item.frame_embeddings[0], item.sentence_embedding)


def test_shapes_and_validation():
    cfg = SynthConfig(n_pairs=64, d=32, n_frame=4, vocab_size=64, words_per_caption=4,
                      noise_sigma=0.05, seed=7)
    ds, vocab = generate_aligned_dataset(cfg)
    assert len(ds.items) == 64
    assert ds.d == 32 and ds.n_frame == 4
    assert len(vocab) == 64 and vocab.d == 32
    assert validate(ds, vocab_size=len(vocab)) == []


def test_vocab_rows_unit_norm():
    _, vocab = generate_aligned_dataset(SynthConfig(seed=1))
    np.testing.assert_allclose(
        np.linalg.norm(vocab.embeddings, axis=1), np.ones(len(vocab)), atol=1e-12
    )


def test_noiseless_frames_come_from_caption_words():
    cfg = SynthConfig(n_pairs=12, d=6, n_frame=5, vocab_size=30, words_per_caption=4,
                      noise_sigma=0.0, seed=21)
    ds, vocab = generate_aligned_dataset(cfg)
    for item in ds.items:
        caption_embs = vocab.embeddings[item.caption_token_ids]
        for frame in item.frame_embeddings:
            distances = np.linalg.norm(caption_embs - frame, axis=1)
            assert distances.min() < 1e-12


def test_distinct_seeds_differ():
    ds1, _ = generate_aligned_dataset(SynthConfig(seed=1))
    ds2, _ = generate_aligned_dataset(SynthConfig(seed=2))
    assert not np.array_equal(
        ds1.items[0].sentence_embedding, ds2.items[0].sentence_embedding
    )


@pytest.mark.parametrize(
    "bad",
    [
        dict(n_pairs=0),
        dict(d=1),
        dict(vocab_size=3, words_per_caption=4),
        dict(words_per_caption=0),
        dict(noise_sigma=-0.1),
        dict(n_frame=0),
    ],
)
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        generate_aligned_dataset(SynthConfig(**bad))
