"""Command-line entry point for the offline embedding exporter.

Exit codes: 0 success, 1 dataset or encoder failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .encoders import EncoderLoadError
from .export import DEFAULT_FRAMES_PER_VIDEO, ExportManifest, export
from .sampling import DatasetError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svta-export",
        description="Embed a video-caption dataset into S3MAEMB1/S3MAVOC1 files.",
    )
    parser.add_argument("--dataset", required=True, help="dataset root directory")
    parser.add_argument("--split", default=None, help="caption split name (captions_<split>.json)")
    parser.add_argument("--frames", type=int, default=DEFAULT_FRAMES_PER_VIDEO,
                        help="frames sampled uniformly per video")
    parser.add_argument("--encoder", default="hashed",
                        help="encoder identifier: hashed[:dim] or clip:<model_id>")
    parser.add_argument("--concat-captions", action="store_true",
                        help="join each video's captions into one paragraph item")
    parser.add_argument("--emb-out", required=True, help="embedding file to write")
    parser.add_argument("--vocab-out", required=True, help="vocabulary file to write")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    manifest = ExportManifest(
        dataset_root=Path(args.dataset),
        embeddings_out=Path(args.emb_out),
        vocab_out=Path(args.vocab_out),
        split=args.split,
        frames_per_video=args.frames,
        encoder=args.encoder,
        concat_captions=args.concat_captions,
    )
    try:
        report = export(manifest)
    except (DatasetError, EncoderLoadError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {args.emb_out} ({report.n_items} items, {report.n_videos} videos) "
        f"and {args.vocab_out} ({report.vocab_size} tokens)"
    )
    if report.skipped:
        print(f"skipped {len(report.skipped)} caption units with no tokens", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
