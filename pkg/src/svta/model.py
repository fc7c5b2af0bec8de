"""Estimator-style facade over concept-space construction, training, scoring.

Follows the scikit-learn conventions without depending on scikit-learn:
constructor arguments are stored verbatim, ``get_params``/``set_params``
expose them for cloning and grid search, ``fit`` learns state into
underscore-suffixed attributes, and ``transform``/``predict``/``score``
operate on fitted state. ``sklearn.base.clone`` works on instances of this
class unchanged.
"""

from __future__ import annotations

import inspect

import numpy as np

from .concepts import init_concepts
from .errors import ConfigError
from .losses import LossWeights
from .metrics import TEXT_TO_VIDEO, VIDEO_TO_TEXT, RetrievalReport, both_directions
from .similarity import batch_similarity_matrix, inverted_softmax
from .store import EmbeddingSet, Vocabulary
from .temporal import SELF_ATTENTION
from .trainer import TrainConfig, train


class VideoTextAligner:
    """Learns a shared sparse space plus similarity heads from paired data.

    Parameters mirror :class:`svta.trainer.TrainConfig`; ``n_concepts`` sizes
    the sparse space built from the vocabulary during ``fit``.
    """

    def __init__(
        self,
        n_concepts: int = 1024,
        epochs: int = 50,
        batch_size: int = 16,
        base_lr: float = 1e-3,
        weight_decay: float = 0.2,
        warmup_steps: int = 10,
        alpha: float = 0.02,
        beta: float = 0.01,
        enable_vs: bool = True,
        enable_fs: bool = True,
        enable_vcsc: bool = True,
        enable_fcsc: bool = True,
        temporal_mode: str = SELF_ATTENTION,
        train_concepts: bool = True,
        anchor_free: bool = False,
        seed: int = 0,
    ):
        self.n_concepts = n_concepts
        self.epochs = epochs
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.alpha = alpha
        self.beta = beta
        self.enable_vs = enable_vs
        self.enable_fs = enable_fs
        self.enable_vcsc = enable_vcsc
        self.enable_fcsc = enable_fcsc
        self.temporal_mode = temporal_mode
        self.train_concepts = train_concepts
        self.anchor_free = anchor_free
        self.seed = seed

    # -- scikit-learn parameter protocol ------------------------------------

    @classmethod
    def _param_names(cls) -> list[str]:
        signature = inspect.signature(cls.__init__)
        return [name for name in signature.parameters if name != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "VideoTextAligner":
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(f"invalid parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self

    # -- fitting and scoring -------------------------------------------------

    def make_train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            base_lr=self.base_lr,
            weight_decay=self.weight_decay,
            warmup_steps=self.warmup_steps,
            seed=self.seed,
            weights=LossWeights(alpha=self.alpha, beta=self.beta),
            enable_vs=self.enable_vs,
            enable_fs=self.enable_fs,
            enable_vcsc=self.enable_vcsc,
            enable_fcsc=self.enable_fcsc,
            temporal_mode=self.temporal_mode,
            n_c=self.n_concepts,
            train_concepts=self.train_concepts,
            anchor_free=self.anchor_free,
        )

    def fit(self, X: EmbeddingSet, vocab: Vocabulary) -> "VideoTextAligner":
        """Cluster the vocabulary, then train all alignment parameters on X."""
        if self.n_concepts > len(vocab):
            raise ConfigError(
                f"n_concepts {self.n_concepts} exceeds vocabulary size {len(vocab)}"
            )
        space = init_concepts(vocab, self.n_concepts, self.seed)
        self.params_, self.trace_ = train(X, space, self.make_train_config())
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise ConfigError("this aligner is not fitted yet; call fit first")

    def transform(self, X: EmbeddingSet, invert: bool = False, tau: float = 100.0) -> np.ndarray:
        """Similarity matrix of X's videos (rows) against X's texts (columns)."""
        self._check_fitted()
        S = batch_similarity_matrix(self.params_, X.video_blocks(), X.text_queries())
        return inverted_softmax(S, tau) if invert else S

    def predict(self, X: EmbeddingSet) -> np.ndarray:
        """Index of the best-scoring video for each text query."""
        return self.transform(X).argmax(axis=0)

    def evaluate(self, X: EmbeddingSet, invert: bool = False, tau: float = 100.0) -> dict[str, RetrievalReport]:
        return both_directions(self.transform(X, invert=invert, tau=tau))

    def score(self, X: EmbeddingSet) -> float:
        """Mean of the two R@1 percentages (higher is better)."""
        reports = self.evaluate(X)
        return 0.5 * (reports[TEXT_TO_VIDEO].r_at[1] + reports[VIDEO_TO_TEXT].r_at[1])
