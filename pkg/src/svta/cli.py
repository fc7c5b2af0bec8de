"""Command-line entry point.

Subcommands: gen-synth, cluster, train, eval, ablate, retrieve. Every source
of randomness is an explicit --seed flag, so any command rerun with the same
flags reproduces its outputs bit for bit. Flags can also be read from a JSON
file via --config; explicitly passed flags win over file values. The fully
resolved configuration of every run is logged to stderr.

Exit codes: 0 success, 1 runtime/IO failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import concepts as concepts_mod
from . import store
from .errors import ConfigError, SvtaError
from .losses import LossWeights
from .metrics import TEXT_TO_VIDEO, VIDEO_TO_TEXT, both_directions
from .similarity import batch_similarity_matrix, inverted_softmax
from .synth import SynthConfig, generate_aligned_dataset
from .temporal import MEAN_POOL, SELF_ATTENTION
from .trainer import TrainConfig, load_checkpoint, save_checkpoint, train, write_trace_csv

# The ten head-enable combinations of the similarity ablation, coarse to full:
# (enable_vs, enable_fs, enable_vcsc, enable_fcsc).
ABLATION_COMBOS: list[tuple[str, tuple[bool, bool, bool, bool]]] = [
    ("dv", (True, False, False, False)),
    ("dv_sv", (True, False, True, False)),
    ("df", (False, True, False, False)),
    ("df_sf", (False, True, False, True)),
    ("dv_sf", (True, False, False, True)),
    ("df_sv", (False, True, True, False)),
    ("dense", (True, True, False, False)),
    ("dense_sv", (True, True, True, False)),
    ("dense_sf", (True, True, False, True)),
    ("all", (True, True, True, True)),
]

_GEN_DEFAULTS = {
    "pairs": 64,
    "dim": 32,
    "frames": 4,
    "vocab": 64,
    "words_per_caption": 4,
    "noise": 0.05,
    "seed": 0,
}

_TRAIN_DEFAULTS = {
    "epochs": 50,
    "batch_size": 16,
    "lr": 1e-3,
    "weight_decay": 0.2,
    "warmup": 10,
    "seed": 0,
    "alpha": 0.02,
    "beta": 0.01,
    "vs": True,
    "fs": True,
    "vcsc": True,
    "fcsc": True,
    "temporal": True,
    "train_concepts": True,
    "anchor_free": False,
}


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge precedence: explicit flag > config-file value > built-in default."""
    file_values = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_values = json.load(fh)
    resolved = {}
    for key, default in defaults.items():
        flag = getattr(args, key)
        if flag is not None:
            resolved[key] = flag
        elif key in file_values:
            resolved[key] = file_values[key]
        else:
            resolved[key] = default
    return resolved


def _log_config(command: str, resolved: dict) -> None:
    print(f"[{command}] resolved config: {json.dumps(resolved, sort_keys=True)}", file=sys.stderr)


def _train_config(resolved: dict) -> TrainConfig:
    return TrainConfig(
        epochs=resolved["epochs"],
        batch_size=resolved["batch_size"],
        base_lr=resolved["lr"],
        weight_decay=resolved["weight_decay"],
        warmup_steps=resolved["warmup"],
        seed=resolved["seed"],
        weights=LossWeights(alpha=resolved["alpha"], beta=resolved["beta"]),
        enable_vs=resolved["vs"],
        enable_fs=resolved["fs"],
        enable_vcsc=resolved["vcsc"],
        enable_fcsc=resolved["fcsc"],
        temporal_mode=SELF_ATTENTION if resolved["temporal"] else MEAN_POOL,
        train_concepts=resolved["train_concepts"],
        anchor_free=resolved["anchor_free"],
    )


def _load_model(emb_path, concepts_path, ckpt_path):
    dataset = store.read_embeddings(emb_path)
    space = concepts_mod.read_concepts(concepts_path)
    params, train_cfg = load_checkpoint(ckpt_path, assignment=space.assignment)
    if params.space.d != dataset.d:
        raise SvtaError(
            f"checkpoint dim {params.space.d} != embeddings dim {dataset.d}"
        )
    problems = store.validate(dataset, vocab_size=space.n_words)
    if problems:
        raise SvtaError("; ".join(problems))
    return dataset, space, params, train_cfg


def _score_matrix(dataset, params, invert: bool, tau: float) -> np.ndarray:
    S = batch_similarity_matrix(params, dataset.video_blocks(), dataset.text_queries())
    return inverted_softmax(S, tau) if invert else S


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------

def cmd_gen_synth(args) -> int:
    resolved = _resolve(args, _GEN_DEFAULTS)
    _log_config("gen-synth", resolved)
    cfg = SynthConfig(
        n_pairs=resolved["pairs"],
        d=resolved["dim"],
        n_frame=resolved["frames"],
        vocab_size=resolved["vocab"],
        words_per_caption=resolved["words_per_caption"],
        noise_sigma=resolved["noise"],
        seed=resolved["seed"],
    )
    dataset, vocab = generate_aligned_dataset(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    store.write_embeddings(dataset, out / "embeddings.bin")
    store.write_vocabulary(vocab, out / "vocab.bin")
    print(f"wrote {out / 'embeddings.bin'} ({len(dataset)} items) and {out / 'vocab.bin'}")
    return 0


def cmd_cluster(args) -> int:
    resolved = _resolve(args, {"nc": 1024, "seed": 0})
    _log_config("cluster", resolved)
    vocab = store.read_vocabulary(args.vocab)
    space = concepts_mod.init_concepts(vocab, resolved["nc"], resolved["seed"])
    concepts_mod.write_concepts(space, args.out)
    print(f"wrote {args.out} ({space.n_c} concepts over {space.n_words} words)")
    return 0


def cmd_train(args) -> int:
    resolved = _resolve(args, _TRAIN_DEFAULTS)
    _log_config("train", resolved)
    dataset = store.read_embeddings(args.emb)
    space = concepts_mod.read_concepts(args.concepts)
    cfg = _train_config(resolved)
    params, trace = train(dataset, space, cfg)
    save_checkpoint(args.out, params, cfg)
    if args.trace:
        write_trace_csv(trace, args.trace)
    first = trace[0].total if trace else float("nan")
    last = trace[-1].total if trace else float("nan")
    print(f"wrote {args.out}: {len(trace)} steps, loss {first:.4f} -> {last:.4f}")
    return 0


def cmd_eval(args) -> int:
    resolved = _resolve(args, {"inverted_softmax": False, "tau": 100.0})
    _log_config("eval", resolved)
    dataset, _, params, _ = _load_model(args.emb, args.concepts, args.ckpt)
    S = _score_matrix(dataset, params, resolved["inverted_softmax"], resolved["tau"])
    reports = both_directions(S)
    for direction in (TEXT_TO_VIDEO, VIDEO_TO_TEXT):
        print(reports[direction].text_record())
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["direction", "n_queries", "r1", "r5", "r10", "mdr", "mnr"]
            )
            for direction in (TEXT_TO_VIDEO, VIDEO_TO_TEXT):
                rep = reports[direction]
                writer.writerow([direction, rep.n_queries, *rep.csv_values()])
    return 0


def cmd_ablate(args) -> int:
    defaults = dict(_GEN_DEFAULTS) | dict(_TRAIN_DEFAULTS) | {
        "noise": 0.3,
        "nc": 16,
        "seeds": "7,8,9",
        "combos": "all10",
    }
    # Head flags are owned by the combo table here.
    for key in ("vs", "fs", "vcsc", "fcsc", "seed"):
        defaults.pop(key, None)
    resolved = _resolve(args, defaults)
    _log_config("ablate", resolved)

    seeds = [int(s) for s in str(resolved["seeds"]).split(",") if s != ""]
    if not seeds:
        raise ConfigError("need at least one seed")
    combo_names = (
        [name for name, _ in ABLATION_COMBOS]
        if resolved["combos"] == "all10"
        else [c for c in str(resolved["combos"]).split(",") if c != ""]
    )
    table = dict(ABLATION_COMBOS)
    unknown = [c for c in combo_names if c not in table]
    if unknown:
        raise ConfigError(f"unknown combos {unknown}; valid: {[n for n, _ in ABLATION_COMBOS]}")

    rows = []
    for seed in seeds:
        synth_cfg = SynthConfig(
            n_pairs=resolved["pairs"],
            d=resolved["dim"],
            n_frame=resolved["frames"],
            vocab_size=resolved["vocab"],
            words_per_caption=resolved["words_per_caption"],
            noise_sigma=resolved["noise"],
            seed=seed,
        )
        dataset, vocab = generate_aligned_dataset(synth_cfg)
        space = concepts_mod.init_concepts(vocab, resolved["nc"], seed)
        for name in combo_names:
            vs, fs, vcsc, fcsc = table[name]
            cfg = _train_config(resolved | {"vs": vs, "fs": fs, "vcsc": vcsc,
                                            "fcsc": fcsc, "seed": seed})
            params, _ = train(dataset, space, cfg)
            S = batch_similarity_matrix(params, dataset.video_blocks(), dataset.text_queries())
            reports = both_directions(S)
            rows.append(
                [name, int(vs), int(fs), int(vcsc), int(fcsc), seed]
                + reports[TEXT_TO_VIDEO].csv_values()
                + reports[VIDEO_TO_TEXT].csv_values()
            )
            print(
                f"combo={name} seed={seed} "
                f"t2v_r1={reports[TEXT_TO_VIDEO].r_at[1]:.1f} "
                f"v2t_r1={reports[VIDEO_TO_TEXT].r_at[1]:.1f}",
                file=sys.stderr,
            )
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["combo", "enable_vs", "enable_fs", "enable_vcsc", "enable_fcsc", "seed",
             "t2v_r1", "t2v_r5", "t2v_r10", "t2v_mdr", "t2v_mnr",
             "v2t_r1", "v2t_r5", "v2t_r10", "v2t_mdr", "v2t_mnr"]
        )
        writer.writerows(rows)
    print(f"wrote {args.out}: {len(rows)} rows")
    return 0


def cmd_retrieve(args) -> int:
    resolved = _resolve(args, {"topk": 5, "inverted_softmax": False, "tau": 100.0})
    _log_config("retrieve", resolved)
    dataset, _, params, _ = _load_model(args.emb, args.concepts, args.ckpt)
    ids = [item.id for item in dataset.items]
    if args.query_id not in ids:
        raise SvtaError(f"query id {args.query_id!r} not found in {args.emb}")
    query = ids.index(args.query_id)
    S = _score_matrix(dataset, params, resolved["inverted_softmax"], resolved["tau"])
    if args.direction == "t2v":
        scores = S[:, query]
    elif args.direction == "v2t":
        scores = S[query, :]
    else:
        raise ConfigError(f"direction must be t2v or v2t, got {args.direction!r}")
    top = np.argsort(-scores, kind="stable")[: resolved["topk"]]
    for rank, idx in enumerate(top, start=1):
        print(f"{rank}\t{ids[int(idx)]}\t{scores[int(idx)]:.6f}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_bool(parser, name, help_text):
    parser.add_argument(
        f"--{name}", action=argparse.BooleanOptionalAction, default=None, help=help_text
    )


def _add_train_flags(parser) -> None:
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None)
    parser.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    parser.add_argument("--warmup", type=int, default=None)
    parser.add_argument("--alpha", type=float, default=None, help="alignment-loss weight")
    parser.add_argument("--beta", type=float, default=None, help="sparse-similarity-loss weight")
    _add_bool(parser, "vs", "dense video-sentence head")
    _add_bool(parser, "fs", "dense frame-sentence head")
    _add_bool(parser, "vcsc", "sparse video-sentence head")
    _add_bool(parser, "fcsc", "sparse frame-sentence head")
    _add_bool(parser, "temporal", "self-attention temporal encoder (off = mean pooling)")
    _add_bool(parser, "train-concepts", "update concept centers during training")
    _add_bool(parser, "anchor-free", "similarity-driven sparse sentence representation")


def _add_gen_flags(parser) -> None:
    parser.add_argument("--pairs", type=int, default=None)
    parser.add_argument("--dim", type=int, default=None)
    parser.add_argument("--frames", type=int, default=None)
    parser.add_argument("--vocab", type=int, default=None, help="vocabulary size")
    parser.add_argument("--words-per-caption", dest="words_per_caption", type=int, default=None)
    parser.add_argument("--noise", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svta",
        description="Sparse-space multi-grained video-text alignment experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a seeded synthetic dataset")
    _add_gen_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON file with default flag values")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("cluster", help="build the concept space from a vocabulary")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    p.add_argument("--nc", type=int, default=None, help="number of concepts")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="concept-space file")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("train", help="train alignment parameters")
    p.add_argument("--emb", required=True)
    p.add_argument("--concepts", required=True)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="checkpoint file")
    p.add_argument("--trace", default=None, help="loss-trace CSV file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="bidirectional retrieval report")
    p.add_argument("--emb", required=True)
    p.add_argument("--concepts", required=True)
    p.add_argument("--ckpt", required=True)
    _add_bool(p, "inverted-softmax", "dual-softmax renormalization before ranking")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--csv", default=None, help="also write metrics as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="metric rows per head-enable combination")
    _add_gen_flags(p)
    p.add_argument("--nc", type=int, default=None)
    p.add_argument("--seeds", default=None, help="comma-separated seeds")
    p.add_argument("--combos", default=None, help="comma-separated combo names or 'all10'")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    _add_bool(p, "temporal", "self-attention temporal encoder")
    _add_bool(p, "train-concepts", "update concept centers")
    _add_bool(p, "anchor-free", "similarity-driven sentence projection")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("retrieve", help="top-k listing for one query id")
    p.add_argument("--emb", required=True)
    p.add_argument("--concepts", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--query-id", dest="query_id", required=True)
    p.add_argument("--direction", choices=["t2v", "v2t"], default="t2v")
    p.add_argument("--topk", type=int, default=None)
    _add_bool(p, "inverted-softmax", "dual-softmax renormalization")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_retrieve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SvtaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
