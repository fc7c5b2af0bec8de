"""Pluggable image-text encoders.

Selected by identifier string in the manifest:

    "hashed"            deterministic offline featurizer (default, no weights)
    "hashed:<dim>"      same with an explicit embedding width
    "clip:<model_id>"   CLIP via transformers; needs locally cached weights

The hashed encoder exists so the full export pipeline runs (and is testable)
on machines without model weights or network access: images are downscaled
and pushed through a fixed random projection, tokens get stable
hash-seeded directions. It is not a semantic encoder, but it is
deterministic, which is what the format/pipeline contract needs.
"""

from __future__ import annotations

import abc
import hashlib
import re

import numpy as np
from PIL import Image

IMAGE_SIZE = 224  # encoder input convention; frames are resized before embedding
_TOKEN_RE = re.compile(r"[a-z0-9']+")


class EncoderLoadError(Exception):
    """The requested encoder cannot be constructed on this machine."""


class ImageTextEncoder(abc.ABC):
    """Interface every encoder must implement."""

    dim: int

    @abc.abstractmethod
    def embed_images(self, images: np.ndarray) -> np.ndarray:
        """(n, 224, 224, 3) uint8 -> (n, dim) float embeddings."""

    @abc.abstractmethod
    def tokenize(self, text: str) -> list[str]:
        """Caption -> token strings (the ids are assigned by the exporter)."""

    @abc.abstractmethod
    def embed_tokens(self, tokens: list[str]) -> np.ndarray:
        """Token strings -> (n_tokens, dim) embedding-table rows."""

    @abc.abstractmethod
    def embed_sentence(self, text: str) -> np.ndarray:
        """Caption -> (dim,) sentence embedding."""

    def vocabulary(self) -> tuple[list[str], np.ndarray] | None:
        """Full pretrained token table, if the encoder has a fixed one."""
        return None


def resize_frame(frame: np.ndarray) -> np.ndarray:
    """HxWx3 uint8 -> 224x224x3 uint8 (bilinear)."""
    img = Image.fromarray(frame).convert("RGB").resize(
        (IMAGE_SIZE, IMAGE_SIZE), Image.BILINEAR
    )
    return np.asarray(img, dtype=np.uint8)


class HashedProjectionEncoder(ImageTextEncoder):
    """Deterministic featurizer: no weights, no network, stable across runs."""

    GRID = 16  # images are pooled to GRID x GRID x 3 before projection

    def __init__(self, dim: int = 256):
        if dim < 8:
            raise EncoderLoadError(f"hashed encoder needs dim >= 8, got {dim}")
        self.dim = dim
        feature_len = self.GRID * self.GRID * 3
        rng = np.random.default_rng(self._stable_seed(f"hashed-projection-{dim}"))
        self._projection = rng.normal(size=(feature_len, dim)) / np.sqrt(feature_len)

    @staticmethod
    def _stable_seed(text: str) -> int:
        return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")

    def embed_images(self, images: np.ndarray) -> np.ndarray:
        if images.ndim != 4 or images.shape[1:] != (IMAGE_SIZE, IMAGE_SIZE, 3):
            raise ValueError(f"expected (n, {IMAGE_SIZE}, {IMAGE_SIZE}, 3), got {images.shape}")
        n = images.shape[0]
        block = IMAGE_SIZE // self.GRID
        pooled = (
            images.astype(np.float64)
            .reshape(n, self.GRID, block, self.GRID, block, 3)
            .mean(axis=(2, 4))
        ) / 255.0
        features = pooled.reshape(n, -1) - pooled.reshape(n, -1).mean(axis=1, keepdims=True)
        out = features @ self._projection
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return out / norms

    def tokenize(self, text: str) -> list[str]:
        return _TOKEN_RE.findall(text.lower())

    def embed_tokens(self, tokens: list[str]) -> np.ndarray:
        out = np.empty((len(tokens), self.dim))
        for i, token in enumerate(tokens):
            rng = np.random.default_rng(self._stable_seed(f"token::{token}"))
            v = rng.normal(size=self.dim)
            out[i] = v / np.linalg.norm(v)
        return out

    def embed_sentence(self, text: str) -> np.ndarray:
        tokens = self.tokenize(text)
        if not tokens:
            raise ValueError(f"caption tokenized to nothing: {text!r}")
        return self.embed_tokens(tokens).mean(axis=0)


class ClipEncoder(ImageTextEncoder):
    """CLIP adapter via transformers; requires locally available weights."""

    def __init__(self, model_id: str):
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderLoadError(f"clip encoder needs torch+transformers: {exc}") from exc
        try:
            self._model = CLIPModel.from_pretrained(model_id)
            self._processor = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderLoadError(f"cannot load CLIP weights {model_id!r}: {exc}") from exc
        self._model.eval()
        self.dim = int(self._model.config.projection_dim)

    def embed_images(self, images: np.ndarray) -> np.ndarray:
        import torch

        inputs = self._processor(images=list(images), return_tensors="pt")
        with torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(np.float64)

    def tokenize(self, text: str) -> list[str]:
        return self._processor.tokenizer.tokenize(text)

    def embed_tokens(self, tokens: list[str]) -> np.ndarray:
        import torch

        ids = self._processor.tokenizer.convert_tokens_to_ids(tokens)
        table = self._model.text_model.embeddings.token_embedding.weight
        with torch.no_grad():
            rows = table[torch.tensor(ids)]
        return rows.cpu().numpy().astype(np.float64)

    def embed_sentence(self, text: str) -> np.ndarray:
        import torch

        inputs = self._processor(text=[text], return_tensors="pt", padding=True,
                                 truncation=True)
        with torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        return feats[0].cpu().numpy().astype(np.float64)

    def vocabulary(self) -> tuple[list[str], np.ndarray]:
        import torch

        tokenizer = self._processor.tokenizer
        tokens = [tokenizer.convert_ids_to_tokens(i) for i in range(tokenizer.vocab_size)]
        with torch.no_grad():
            table = self._model.text_model.embeddings.token_embedding.weight.cpu().numpy()
        return tokens, table.astype(np.float64)


def load_encoder(identifier: str) -> ImageTextEncoder:
    """Build an encoder from its identifier string."""
    if identifier == "hashed":
        return HashedProjectionEncoder()
    if identifier.startswith("hashed:"):
        try:
            dim = int(identifier.split(":", 1)[1])
        except ValueError as exc:
            raise EncoderLoadError(f"bad hashed encoder spec {identifier!r}") from exc
        return HashedProjectionEncoder(dim=dim)
    if identifier.startswith("clip:"):
        return ClipEncoder(identifier.split(":", 1)[1])
    raise EncoderLoadError(f"unknown encoder identifier {identifier!r}")
