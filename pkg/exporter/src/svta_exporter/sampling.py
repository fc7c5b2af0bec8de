"""Dataset discovery and uniform temporal frame sampling.

A dataset root looks like:

    root/
      captions.json           # {"video_id": ["caption", ...], ...}
      captions_<split>.json   # used instead when a split name is given
      videos/
        clip01.mp4            # any extension cv2 can decode
        clip02/               # or a directory of frame images, sorted by name
          000.png
          001.png

Frames are sampled uniformly across each video's timeline: ``n`` indices
evenly spaced over [0, total_frames - 1], rounded. Videos shorter than the
requested count repeat frames rather than failing.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

VIDEO_EXTENSIONS = {".mp4", ".avi", ".mkv", ".mov", ".webm"}
IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp"}


class DatasetError(Exception):
    """The dataset root is missing or malformed."""


def uniform_indices(total: int, n: int) -> np.ndarray:
    """n indices evenly covering [0, total-1]; repeats when total < n."""
    if total < 1 or n < 1:
        raise ValueError(f"need total >= 1 and n >= 1, got {total}, {n}")
    return np.round(np.linspace(0.0, total - 1.0, num=n)).astype(int)


def load_captions(root: Path, split: str | None) -> dict[str, list[str]]:
    name = f"captions_{split}.json" if split else "captions.json"
    path = root / name
    if not path.is_file():
        raise DatasetError(f"caption file not found: {path}")
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict) or not raw:
        raise DatasetError(f"{path}: expected a non-empty id -> captions mapping")
    captions: dict[str, list[str]] = {}
    for video_id, value in raw.items():
        entries = [value] if isinstance(value, str) else list(value)
        if not entries or not all(isinstance(c, str) and c.strip() for c in entries):
            raise DatasetError(f"{path}: bad captions for {video_id!r}")
        captions[video_id] = entries
    return captions


def find_video_source(root: Path, video_id: str) -> Path:
    videos_dir = root / "videos"
    frame_dir = videos_dir / video_id
    if frame_dir.is_dir():
        return frame_dir
    for ext in sorted(VIDEO_EXTENSIONS):
        candidate = videos_dir / f"{video_id}{ext}"
        if candidate.is_file():
            return candidate
    raise DatasetError(f"no video file or frame directory for {video_id!r} under {videos_dir}")


def _read_frame_dir(path: Path, n: int) -> list[np.ndarray]:
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
    if not files:
        raise DatasetError(f"{path}: no frame images")
    picks = uniform_indices(len(files), n)
    return [np.asarray(Image.open(files[i]).convert("RGB"), dtype=np.uint8) for i in picks]


def _read_video_file(path: Path, n: int) -> list[np.ndarray]:
    import cv2

    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise DatasetError(f"{path}: cv2 cannot open this file")
    frames = []
    while True:
        ok, frame = capture.read()
        if not ok:
            break
        frames.append(frame[:, :, ::-1].copy())  # BGR -> RGB
    capture.release()
    if not frames:
        raise DatasetError(f"{path}: decoded zero frames")
    picks = uniform_indices(len(frames), n)
    return [frames[i] for i in picks]


def sample_frames(source: Path, n: int) -> list[np.ndarray]:
    """Uniformly sample n RGB frames (HxWx3 uint8) from a video source."""
    if source.is_dir():
        return _read_frame_dir(source, n)
    return _read_video_file(source, n)
