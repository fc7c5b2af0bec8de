"""Shared-sparse-space multi-grained video-text alignment.

Builds a concept space from vocabulary embeddings, trains bilinear
similarity heads plus a temporal encoder with a contrastive objective, and
evaluates bidirectional retrieval on precomputed or synthetic embeddings.
"""

from .concepts import ConceptSpace, init_concepts, read_concepts, write_concepts
from .errors import SvtaError
from .losses import LogitScale, LossWeights
from .metrics import RetrievalReport, retrieval_report
from .model import VideoTextAligner
from .similarity import SimilarityHeads, batch_similarity_matrix, inverted_softmax
from .store import (
    EmbeddingItem,
    EmbeddingSet,
    Vocabulary,
    read_embeddings,
    read_vocabulary,
    validate,
    write_embeddings,
    write_vocabulary,
)
from .synth import SynthConfig, generate_aligned_dataset
from .trainer import ModelParams, TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "ConceptSpace",
    "EmbeddingItem",
    "EmbeddingSet",
    "LogitScale",
    "LossWeights",
    "ModelParams",
    "RetrievalReport",
    "SimilarityHeads",
    "SvtaError",
    "SynthConfig",
    "TrainConfig",
    "VideoTextAligner",
    "Vocabulary",
    "batch_similarity_matrix",
    "generate_aligned_dataset",
    "init_concepts",
    "inverted_softmax",
    "load_checkpoint",
    "read_concepts",
    "read_embeddings",
    "read_vocabulary",
    "retrieval_report",
    "save_checkpoint",
    "train",
    "validate",
    "write_concepts",
    "write_embeddings",
    "write_vocabulary",
]
