"""Offline exporter: image-text encoder over video-caption datasets."""

from .encoders import EncoderLoadError, HashedProjectionEncoder, load_encoder
from .export import DEFAULT_FRAMES_PER_VIDEO, ExportManifest, ExportReport, export
from .sampling import DatasetError, sample_frames, uniform_indices

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_FRAMES_PER_VIDEO",
    "DatasetError",
    "EncoderLoadError",
    "ExportManifest",
    "ExportReport",
    "HashedProjectionEncoder",
    "export",
    "load_encoder",
    "sample_frames",
    "uniform_indices",
]
