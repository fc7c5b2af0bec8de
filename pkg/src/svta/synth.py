"""Deterministic synthetic video-text pairs for training and acceptance runs.

Construction makes the ground-truth pairing recoverable by design: the
vocabulary is a set of unit-normalized random directions, each caption is a
small bag of distinct words, the sentence embedding is the mean of its word
embeddings, and every frame embedding is one caption word's embedding plus
isotropic Gaussian noise. At low noise the matched caption is the unique
nearest text for every video, so perfect retrieval after training is a sound
target rather than a tuned one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rng import SplitMix64
from .store import EmbeddingItem, EmbeddingSet, Vocabulary


@dataclass
class SynthConfig:
    n_pairs: int = 64
    d: int = 32
    n_frame: int = 4
    vocab_size: int = 64
    words_per_caption: int = 4
    noise_sigma: float = 0.05
    seed: int = 0

    def check(self) -> None:
        if self.n_pairs < 1:
            raise ConfigError(f"n_pairs must be >= 1, got {self.n_pairs}")
        if self.d < 2:
            raise ConfigError(f"d must be >= 2, got {self.d}")
        if self.n_frame < 1:
            raise ConfigError(f"n_frame must be >= 1, got {self.n_frame}")
        if not (self.vocab_size >= self.words_per_caption >= 1):
            raise ConfigError(
                f"need vocab_size >= words_per_caption >= 1, got "
                f"{self.vocab_size} / {self.words_per_caption}"
            )
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def generate_aligned_dataset(cfg: SynthConfig) -> tuple[EmbeddingSet, Vocabulary]:
    """Build a fully seeded (bit-reproducible) aligned dataset."""
    cfg.check()
    rng = SplitMix64(cfg.seed)

    raw = np.array(rng.normals(cfg.vocab_size * cfg.d)).reshape(cfg.vocab_size, cfg.d)
    word_embeddings = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    tokens = [f"w{i:04d}" for i in range(cfg.vocab_size)]
    vocab = Vocabulary(tokens=tokens, embeddings=word_embeddings)

    items: list[EmbeddingItem] = []
    for i in range(cfg.n_pairs):
        caption = rng.sample_without_replacement(cfg.vocab_size, cfg.words_per_caption)
        sentence = word_embeddings[caption].mean(axis=0)
        frames = np.empty((cfg.n_frame, cfg.d))
        for f in range(cfg.n_frame):
            word = caption[rng.randrange(cfg.words_per_caption)]
            noise = np.array(rng.normals(cfg.d)) * cfg.noise_sigma
            frames[f] = word_embeddings[word] + noise
        items.append(
            EmbeddingItem(
                id=f"pair{i:04d}",
                caption_token_ids=caption,
                frame_embeddings=frames,
                sentence_embedding=sentence,
            )
        )
    return EmbeddingSet(d=cfg.d, n_frame=cfg.n_frame, items=items), vocab
