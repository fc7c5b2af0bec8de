"""Shared sparse concept space: clustering initialization and projections.

The space is a trainable matrix of concept centers plus a fixed word-to-
concept assignment produced by k-means over the vocabulary embeddings.
Text is projected by looking its words up in the assignment (an anchored,
count-based projection); video and frame vectors are projected by
cosine-weighted combination of the centers, L1-normalized.

``project_rows_to_concepts`` is written against the autodiff functional ops,
so the same formula serves numpy inference and differentiable training.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import (
    BadMagicError,
    ConfigError,
    DegenerateSimilarityError,
    EmptySentenceError,
    UnknownWordError,
    ValidationError,
    ZeroVectorError,
)
from .numerics import ZERO_NORM_TOL, as_matrix, as_vector
from .rng import SplitMix64
from .store import Vocabulary, _Reader

CPT_MAGIC = b"S3MACPT1"
DEGENERATE_L1_TOL = 1e-8


@dataclass
class ConceptSpace:
    C: np.ndarray  # (n_c, d) float64, trainable concept centers
    assignment: np.ndarray  # (n_words,) int64, word id -> concept index

    @property
    def n_c(self) -> int:
        return int(self.C.shape[0])

    @property
    def d(self) -> int:
        return int(self.C.shape[1])

    @property
    def n_words(self) -> int:
        return int(self.assignment.shape[0])


# ---------------------------------------------------------------------------
# k-means initialization
# ---------------------------------------------------------------------------

def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n_points, n_centers) squared euclidean distances."""
    p2 = (points**2).sum(axis=1)[:, None]
    c2 = (centers**2).sum(axis=1)[None, :]
    d2 = p2 + c2 - 2.0 * points @ centers.T
    np.maximum(d2, 0.0, out=d2)
    return d2


def _plusplus_seeding(points: np.ndarray, k: int, rng: SplitMix64) -> np.ndarray:
    n = points.shape[0]
    chosen = [rng.randrange(n)]
    d2 = _squared_distances(points, points[chosen[-1]][None, :]).ravel()
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # All remaining mass collapsed onto chosen centers; fall back to
            # a uniform pick among the not-yet-chosen points.
            remaining = [i for i in range(n) if i not in set(chosen)]
            chosen.append(remaining[rng.randrange(len(remaining))])
        else:
            target = rng.uniform() * total
            idx = int(np.searchsorted(np.cumsum(d2), target, side="right"))
            chosen.append(min(idx, n - 1))
        new_d2 = _squared_distances(points, points[chosen[-1]][None, :]).ravel()
        np.minimum(d2, new_d2, out=d2)
    return points[chosen].copy()


def kmeans(
    points,
    k: int,
    seed: int,
    max_iter: int = 100,
    rel_tol: float = 1e-4,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd's algorithm with k-means++ seeding.

    Returns (centers, labels, inertia_history). Iteration stops after
    ``max_iter`` rounds or when the relative inertia improvement drops below
    ``rel_tol``. An empty cluster is re-seeded to the point currently
    farthest from its own center, which can only reduce inertia.
    """
    points = as_matrix(points, "points")
    n = points.shape[0]
    if not (1 <= k <= n):
        raise ConfigError(f"k must be in [1, {n}], got {k}")
    rng = SplitMix64(seed)
    centers = _plusplus_seeding(points, k, rng)

    d2 = _squared_distances(points, centers)
    labels = d2.argmin(axis=1)
    inertia_history = [float(d2[np.arange(n), labels].sum())]

    for _ in range(max_iter):
        new_centers = centers.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_centers[j] = points[members].mean(axis=0)
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            # Worst-served point becomes the center; recomputing after each
            # reseed keeps simultaneous empty clusters from grabbing the same
            # point (a fresh center sits at distance zero from it).
            nearest = _squared_distances(points, new_centers).min(axis=1)
            new_centers[j] = points[int(nearest.argmax())]
        centers = new_centers
        d2 = _squared_distances(points, centers)
        labels = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), labels].sum())
        inertia_history.append(inertia)
        prev = inertia_history[-2]
        if prev == 0.0 or (prev - inertia) / prev < rel_tol:
            break
    return centers, labels, inertia_history


def init_concepts(vocab: Vocabulary, n_c: int, seed: int) -> ConceptSpace:
    """Cluster the vocabulary embeddings into ``n_c`` concept centers."""
    if not (1 <= n_c <= len(vocab)):
        raise ConfigError(f"n_c must be in [1, {len(vocab)}], got {n_c}")
    centers, labels, _ = kmeans(vocab.embeddings, n_c, seed)
    return ConceptSpace(C=centers, assignment=labels.astype(np.int64))


# ---------------------------------------------------------------------------
# Projections into the sparse space
# ---------------------------------------------------------------------------

def word_to_concept(space: ConceptSpace, word_id: int) -> np.ndarray:
    """One-hot concept indicator for a vocabulary word."""
    if not (0 <= word_id < space.n_words):
        raise UnknownWordError(f"word id {word_id} outside [0, {space.n_words})")
    onehot = np.zeros(space.n_c)
    onehot[space.assignment[word_id]] = 1.0
    return onehot


def sentence_concept_counts(space: ConceptSpace, token_ids: Sequence[int]) -> np.ndarray:
    """Sum of one-hot concept indicators over the caption's tokens."""
    if len(token_ids) == 0:
        raise EmptySentenceError("caption has no tokens")
    counts = np.zeros(space.n_c)
    for tid in token_ids:
        if not (0 <= tid < space.n_words):
            raise UnknownWordError(f"word id {tid} outside [0, {space.n_words})")
        counts[space.assignment[tid]] += 1.0
    return counts


def sparse_sentence_rep(space: ConceptSpace, token_ids: Sequence[int]) -> np.ndarray:
    """Mean of the concept centers fetched by the caption's tokens."""
    counts = sentence_concept_counts(space, token_ids)
    return counts @ space.C / float(len(token_ids))


def caption_weight_matrix(space: ConceptSpace, token_lists: Sequence[Sequence[int]]) -> np.ndarray:
    """(N_t, n_c) anchored text-projection weights: concept counts / |t| per row.

    Right-multiplying by C yields the sparse sentence representations; the
    rows double as the supervision target for the sparse-similarity loss.
    """
    rows = [sentence_concept_counts(space, ids) / float(len(ids)) for ids in token_lists]
    return np.stack(rows)


def project_rows_to_concepts(C, X):
    """Cosine-weighted concept combination of each row of ``X``.

    sims[i, j] = cos(x_i, c_j); reps[i] = sims[i] @ C / ||sims[i]||_1.
    Accepts numpy arrays or autodiff Tensors (C trainable in the latter
    case). Degeneracy of the L1 mass is only checked on the numpy path;
    during training the step-level finiteness guard covers it.
    """
    sims = ad.matmul(ad.l2_normalize_rows(X), ad.transpose(ad.l2_normalize_rows(C)))
    l1 = ad.row_l1_norms(sims)
    if isinstance(l1, np.ndarray) and np.any(l1 < DEGENERATE_L1_TOL):
        bad = int(np.argmin(l1))
        raise DegenerateSimilarityError(
            f"row {bad}: concept-similarity L1 mass {l1[bad]:.3e} below {DEGENERATE_L1_TOL}"
        )
    reps = ad.scale_rows(ad.matmul(sims, C), l1)
    return sims, reps


def sparse_video_rep(space: ConceptSpace, r_v) -> tuple[np.ndarray, np.ndarray]:
    """Project one dense video vector; returns (rep, concept similarities)."""
    r_v = as_vector(r_v, "r_v")
    if float(np.linalg.norm(r_v)) <= ZERO_NORM_TOL:
        raise ZeroVectorError("video representation has zero norm")
    sims, reps = project_rows_to_concepts(space.C, r_v[None, :])
    return reps[0], sims[0]


def sparse_frame_reps(space: ConceptSpace, r_f) -> tuple[np.ndarray, np.ndarray]:
    """Project each frame row independently; returns (reps, similarities)."""
    r_f = as_matrix(r_f, "r_f")
    sims, reps = project_rows_to_concepts(space.C, r_f)
    return reps, sims


def anchor_free_sentence_rep(space: ConceptSpace, r_s) -> np.ndarray:
    """Sentence projection driven by cosine similarity instead of token lookup."""
    r_s = as_vector(r_s, "r_s")
    if float(np.linalg.norm(r_s)) <= ZERO_NORM_TOL:
        raise ZeroVectorError("sentence representation has zero norm")
    _, reps = project_rows_to_concepts(space.C, r_s[None, :])
    return reps[0]


# ---------------------------------------------------------------------------
# Persistence (format S3MACPT1)
# ---------------------------------------------------------------------------

def write_concepts(space: ConceptSpace, path) -> None:
    with open(path, "wb") as fh:
        fh.write(CPT_MAGIC)
        fh.write(struct.pack("<IIII", 1, space.n_c, space.d, space.n_words))
        fh.write(np.ascontiguousarray(space.C, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(space.assignment, dtype="<u4").tobytes())


def read_concepts(path) -> ConceptSpace:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), path)
    magic = reader.take(8)
    if magic != CPT_MAGIC:
        raise BadMagicError(f"{path}: expected {CPT_MAGIC!r}, found {magic!r}")
    version, n_c, d, n_words = reader.unpack("<IIII")
    if version != 1:
        raise ValidationError(f"{path}: unsupported version {version}")
    C = reader.f32_array(n_c * d, (n_c, d))
    raw = reader.take(4 * n_words)
    assignment = np.frombuffer(raw, dtype="<u4").astype(np.int64)
    reader.finish()
    if assignment.size and assignment.max() >= n_c:
        raise ValidationError(f"{path}: assignment index {assignment.max()} >= n_c {n_c}")
    return ConceptSpace(C=C, assignment=assignment)


__all__ = [
    "ConceptSpace",
    "kmeans",
    "init_concepts",
    "word_to_concept",
    "sentence_concept_counts",
    "sparse_sentence_rep",
    "project_rows_to_concepts",
    "sparse_video_rep",
    "sparse_frame_reps",
    "anchor_free_sentence_rep",
    "write_concepts",
    "read_concepts",
]
