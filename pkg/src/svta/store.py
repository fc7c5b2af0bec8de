"""Binary persistence of precomputed embeddings and vocabulary.

Two little-endian formats, both with an 8-byte ASCII magic:

``S3MAEMB1`` (embedding sets)
    header:  u32 version=1, u32 d, u32 n_frame, u64 item_count
    item:    u32 id_len + UTF-8 id bytes,
             u32 token_count + token_count * u32 token ids,
             n_frame*d f32 frame embeddings (row-major),
             d f32 sentence embedding

``S3MAVOC1`` (vocabularies)
    header:  u32 version=1, u32 d, u64 n_words
    body:    n_words * (u32 len + UTF-8 token bytes), then n_words*d f32
             token embeddings (row-major)

Values are stored as f32 and widened to f64 in memory. Serialization is
canonical: writing what was read reproduces the file byte for byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagicError, TruncatedFileError, ValidationError

EMB_MAGIC = b"S3MAEMB1"
VOC_MAGIC = b"S3MAVOC1"
FORMAT_VERSION = 1


@dataclass
class EmbeddingItem:
    """One video-caption pair: per-frame embeddings plus a sentence embedding."""

    id: str
    caption_token_ids: list[int]
    frame_embeddings: np.ndarray  # (n_frame, d) float64
    sentence_embedding: np.ndarray  # (d,) float64


@dataclass
class EmbeddingSet:
    d: int
    n_frame: int
    items: list[EmbeddingItem] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def video_blocks(self) -> list[np.ndarray]:
        return [item.frame_embeddings for item in self.items]

    def text_queries(self) -> list[tuple[np.ndarray, list[int]]]:
        return [(item.sentence_embedding, item.caption_token_ids) for item in self.items]


@dataclass
class Vocabulary:
    tokens: list[str]
    embeddings: np.ndarray  # (n_words, d) float64

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def d(self) -> int:
        return int(self.embeddings.shape[1])


def validate(dataset: EmbeddingSet, vocab_size: int | None = None) -> list[str]:
    """Return a list of human-readable invariant violations (empty if none).

    ``vocab_size`` bounds caption token ids when known; without it the token
    range check is skipped (the ids-only format cannot know the vocabulary).
    """
    violations: list[str] = []
    seen_ids: set[str] = set()
    for item in dataset.items:
        if item.id in seen_ids:
            violations.append(f"{item.id}: duplicate id")
        seen_ids.add(item.id)
        fe = np.asarray(item.frame_embeddings)
        se = np.asarray(item.sentence_embedding)
        if fe.shape != (dataset.n_frame, dataset.d):
            violations.append(
                f"{item.id}: frame embeddings shape {fe.shape} != "
                f"({dataset.n_frame}, {dataset.d})"
            )
        if se.shape != (dataset.d,):
            violations.append(
                f"{item.id}: sentence embedding shape {se.shape} != ({dataset.d},)"
            )
        if not np.all(np.isfinite(fe)):
            violations.append(f"{item.id}: non-finite frame value")
        if not np.all(np.isfinite(se)):
            violations.append(f"{item.id}: non-finite sentence value")
        for tid in item.caption_token_ids:
            if tid < 0 or (vocab_size is not None and tid >= vocab_size):
                violations.append(f"{item.id}: token id {tid} out of range")
                break
    return violations


def _write_f32(fh, array: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def write_embeddings(dataset: EmbeddingSet, path) -> None:
    """Serialize an embedding set; refuses sets that fail validation."""
    problems = validate(dataset)
    if problems:
        raise ValidationError("; ".join(problems))
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<IIIQ", FORMAT_VERSION, dataset.d, dataset.n_frame, len(dataset.items)))
        for item in dataset.items:
            id_bytes = item.id.encode("utf-8")
            fh.write(struct.pack("<I", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(struct.pack("<I", len(item.caption_token_ids)))
            fh.write(struct.pack(f"<{len(item.caption_token_ids)}I", *item.caption_token_ids))
            _write_f32(fh, item.frame_embeddings)
            _write_f32(fh, item.sentence_embedding)


class _Reader:
    """Sequential reader that raises TruncatedFileError on short reads."""

    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"{self.path}: needed {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def f32_array(self, count: int, shape) -> np.ndarray:
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise ValidationError(
                f"{self.path}: {len(self.data) - self.pos} trailing bytes after payload"
            )


def read_embeddings(path) -> EmbeddingSet:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), path)
    magic = reader.take(8)
    if magic != EMB_MAGIC:
        raise BadMagicError(f"{path}: expected {EMB_MAGIC!r}, found {magic!r}")
    version, d, n_frame, count = reader.unpack("<IIIQ")
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported version {version}")
    items: list[EmbeddingItem] = []
    for _ in range(count):
        (id_len,) = reader.unpack("<I")
        item_id = reader.take(id_len).decode("utf-8")
        (n_tok,) = reader.unpack("<I")
        token_ids = list(reader.unpack(f"<{n_tok}I")) if n_tok else []
        frames = reader.f32_array(n_frame * d, (n_frame, d))
        sentence = reader.f32_array(d, (d,))
        items.append(EmbeddingItem(item_id, token_ids, frames, sentence))
    reader.finish()
    dataset = EmbeddingSet(d=d, n_frame=n_frame, items=items)
    problems = validate(dataset)
    if problems:
        raise ValidationError("; ".join(problems))
    return dataset


def write_vocabulary(vocab: Vocabulary, path) -> None:
    if len(vocab.tokens) != vocab.embeddings.shape[0]:
        raise ValidationError(
            f"token count {len(vocab.tokens)} != embedding rows {vocab.embeddings.shape[0]}"
        )
    if len(set(vocab.tokens)) != len(vocab.tokens):
        raise ValidationError("duplicate tokens in vocabulary")
    with open(path, "wb") as fh:
        fh.write(VOC_MAGIC)
        fh.write(struct.pack("<IIQ", FORMAT_VERSION, vocab.d, len(vocab.tokens)))
        for token in vocab.tokens:
            token_bytes = token.encode("utf-8")
            fh.write(struct.pack("<I", len(token_bytes)))
            fh.write(token_bytes)
        _write_f32(fh, vocab.embeddings)


def read_vocabulary(path) -> Vocabulary:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), path)
    magic = reader.take(8)
    if magic != VOC_MAGIC:
        raise BadMagicError(f"{path}: expected {VOC_MAGIC!r}, found {magic!r}")
    version, d, n_words = reader.unpack("<IIQ")
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported version {version}")
    tokens = []
    for _ in range(n_words):
        (length,) = reader.unpack("<I")
        tokens.append(reader.take(length).decode("utf-8"))
    embeddings = reader.f32_array(n_words * d, (n_words, d))
    reader.finish()
    if len(set(tokens)) != len(tokens):
        raise ValidationError(f"{path}: duplicate tokens")
    if not np.all(np.isfinite(embeddings)):
        raise ValidationError(f"{path}: non-finite embedding values")
    return Vocabulary(tokens=tokens, embeddings=embeddings)
