"""Writers for the S3MAEMB1 / S3MAVOC1 binary formats.

Implemented here against the published byte layout rather than by importing
the alignment engine: the file format is the contract between the two
packages, and an independent writer keeps it honest (the test suite reads
these files back with the engine).

Layout (all little-endian, values stored as f32):

``S3MAEMB1``: magic, u32 version=1, u32 d, u32 n_frame, u64 item_count, then
per item a u32-length-prefixed UTF-8 id, u32 token count + u32 token ids,
n_frame*d frame floats (row-major), d sentence floats.

``S3MAVOC1``: magic, u32 version=1, u32 d, u64 n_words, then n_words
u32-length-prefixed UTF-8 tokens followed by n_words*d floats.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

EMB_MAGIC = b"S3MAEMB1"
VOC_MAGIC = b"S3MAVOC1"


@dataclass
class ExportItem:
    id: str
    token_ids: list[int]
    frame_embeddings: np.ndarray  # (n_frame, d)
    sentence_embedding: np.ndarray  # (d,)


def _f32(fh, array: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def write_embedding_file(path, d: int, n_frame: int, items: list[ExportItem]) -> None:
    for item in items:
        if item.frame_embeddings.shape != (n_frame, d):
            raise ValueError(
                f"{item.id}: frame block {item.frame_embeddings.shape} != ({n_frame}, {d})"
            )
        if item.sentence_embedding.shape != (d,):
            raise ValueError(f"{item.id}: sentence shape {item.sentence_embedding.shape}")
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<IIIQ", 1, d, n_frame, len(items)))
        for item in items:
            id_bytes = item.id.encode("utf-8")
            fh.write(struct.pack("<I", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(struct.pack("<I", len(item.token_ids)))
            fh.write(struct.pack(f"<{len(item.token_ids)}I", *item.token_ids))
            _f32(fh, item.frame_embeddings)
            _f32(fh, item.sentence_embedding)


def write_vocab_file(path, tokens: list[str], embeddings: np.ndarray) -> None:
    if embeddings.shape[0] != len(tokens):
        raise ValueError(f"{len(tokens)} tokens vs {embeddings.shape[0]} embedding rows")
    with open(path, "wb") as fh:
        fh.write(VOC_MAGIC)
        fh.write(struct.pack("<IIQ", 1, embeddings.shape[1], len(tokens)))
        for token in tokens:
            token_bytes = token.encode("utf-8")
            fh.write(struct.pack("<I", len(token_bytes)))
            fh.write(token_bytes)
        _f32(fh, embeddings)
