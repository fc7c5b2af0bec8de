"""The export job: encoder over dataset -> embedding + vocabulary files."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import ImageTextEncoder, load_encoder, resize_frame
from .formats import ExportItem, write_embedding_file, write_vocab_file
from .sampling import DatasetError, find_video_source, load_captions, sample_frames

DEFAULT_FRAMES_PER_VIDEO = 12


@dataclass
class ExportManifest:
    dataset_root: Path
    embeddings_out: Path
    vocab_out: Path
    split: str | None = None
    frames_per_video: int = DEFAULT_FRAMES_PER_VIDEO
    encoder: str = "hashed"
    concat_captions: bool = False  # paragraph retrieval: one item per video

    def check(self) -> None:
        if self.frames_per_video < 1:
            raise ValueError(f"frames_per_video must be >= 1, got {self.frames_per_video}")
        if not Path(self.dataset_root).is_dir():
            raise DatasetError(f"dataset root not found: {self.dataset_root}")


@dataclass
class ExportReport:
    n_items: int = 0
    n_videos: int = 0
    vocab_size: int = 0
    skipped: list[str] = field(default_factory=list)


def _caption_units(captions: dict[str, list[str]], concat: bool):
    """Yield (item_id, video_id, caption_text) in deterministic order."""
    for video_id in sorted(captions):
        entries = captions[video_id]
        if concat or len(entries) == 1:
            yield video_id, video_id, " ".join(entries)
        else:
            for k, caption in enumerate(entries):
                yield f"{video_id}#{k}", video_id, caption


def export(manifest: ExportManifest) -> ExportReport:
    """Run the encoder over every (video, caption) unit and write both files.

    The vocabulary is the encoder's own token table when it has one,
    otherwise the sorted set of tokens appearing in the dataset's captions.
    """
    manifest.check()
    encoder: ImageTextEncoder = load_encoder(manifest.encoder)
    root = Path(manifest.dataset_root)
    captions = load_captions(root, manifest.split)

    units = list(_caption_units(captions, manifest.concat_captions))

    fixed_vocab = encoder.vocabulary()
    if fixed_vocab is not None:
        tokens, token_table = fixed_vocab
    else:
        seen: set[str] = set()
        for _, _, text in units:
            seen.update(encoder.tokenize(text))
        if not seen:
            raise DatasetError("no tokens found in any caption")
        tokens = sorted(seen)
        token_table = encoder.embed_tokens(tokens)
    token_to_id = {token: i for i, token in enumerate(tokens)}

    frame_cache: dict[str, np.ndarray] = {}
    items: list[ExportItem] = []
    report = ExportReport(vocab_size=len(tokens))
    for item_id, video_id, text in units:
        if video_id not in frame_cache:
            source = find_video_source(root, video_id)
            frames = sample_frames(source, manifest.frames_per_video)
            batch = np.stack([resize_frame(f) for f in frames])
            frame_cache[video_id] = encoder.embed_images(batch)
            report.n_videos += 1
        token_ids = [token_to_id[t] for t in encoder.tokenize(text) if t in token_to_id]
        if not token_ids:
            report.skipped.append(item_id)
            continue
        items.append(
            ExportItem(
                id=item_id,
                token_ids=token_ids,
                frame_embeddings=frame_cache[video_id],
                sentence_embedding=encoder.embed_sentence(text),
            )
        )
    if not items:
        raise DatasetError("every caption unit was skipped; nothing to write")

    write_embedding_file(
        manifest.embeddings_out, encoder.dim, manifest.frames_per_video, items
    )
    write_vocab_file(manifest.vocab_out, tokens, token_table)
    report.n_items = len(items)
    return report
