"""Command line interface.

Stages compose through the filesystem: each subcommand reads what the
previous one wrote under --out. Exit codes: 0 success, 2 bad
configuration or degenerate data, 3 I/O failure, 4 missing or
incompatible upstream artifact.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from profilebench.errors import IoFailure, ProfileBenchError, SchemaMismatch
from profilebench.pipeline import (
    LADDER,
    LADDER_BY_ID,
    PipelineConfig,
    stage_balance,
    stage_eval,
    stage_featurize,
    stage_gen,
    stage_report,
    stage_split,
    stage_train,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DEPENDENCY = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pbench",
        description="Synthetic gameplay corpus, featurization, and the classifier ladder.",
    )
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument(
        "--out",
        help="output directory (default: $PBENCH_OUT, then the config value)",
    )
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--threads", type=int, help="worker threads for generation")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="force single-threaded generation regardless of --threads",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate the session corpus")
    p_gen.add_argument("--games-per-profile", type=int, dest="games_per_profile")

    p_feat = sub.add_parser("featurize", help="windowed feature tensors + aggregates")
    p_feat.add_argument("--window-len", type=int, dest="window_len")
    p_feat.add_argument("--stride", type=int, dest="stride")

    p_bal = sub.add_parser("balance", help="cap per-class window counts")
    p_bal.add_argument("--target", type=int, help="windows per class (default: auto)")

    p_split = sub.add_parser("split", help="game-exclusive train/val/test split")
    p_split.add_argument("--train-frac", type=float, dest="train_frac")
    p_split.add_argument("--val-frac", type=float, dest="val_frac")
    p_split.add_argument("--test-frac", type=float, dest="test_frac")

    p_train = sub.add_parser("train", help="train ladder rows")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--hidden", type=int)
    p_train.add_argument("--rows", help="comma-separated row ids (default: all configured)")

    p_eval = sub.add_parser("eval", help="evaluate trained rows on the test split")
    p_eval.add_argument("--rows", help="comma-separated row ids (default: all configured)")

    sub.add_parser("report", help="merge per-row metrics into one table")

    p_all = sub.add_parser("run-all", help="gen, featurize, balance, split, train, eval")
    p_all.add_argument("--games-per-profile", type=int, dest="games_per_profile")
    p_all.add_argument("--epochs", type=int)
    p_all.add_argument("--hidden", type=int)
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    out = args.out or os.environ.get("PBENCH_OUT")
    if out:
        cfg = replace(cfg, out_dir=out)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    if args.deterministic:
        cfg = replace(cfg, deterministic=True)
    for name in ("games_per_profile", "window_len", "stride", "train_frac", "val_frac", "test_frac"):
        value = getattr(args, name, None)
        if value is not None:
            cfg = replace(cfg, **{name: value})
    if getattr(args, "target", None) is not None:
        cfg = replace(cfg, balance_target=args.target)
    train_over = {
        k: v
        for k, v in (("epochs", getattr(args, "epochs", None)), ("hidden", getattr(args, "hidden", None)))
        if v is not None
    }
    if train_over:
        cfg = replace(cfg, train=replace(cfg.train, **train_over))
    cfg.validate()
    return cfg


def parse_rows(args: argparse.Namespace) -> list[str] | None:
    raw = getattr(args, "rows", None)
    if raw is None:
        return None
    rows = [r.strip() for r in raw.split(",") if r.strip()]
    unknown = [r for r in rows if r not in LADDER_BY_ID]
    if unknown:
        known = ", ".join(r.row_id for r in LADDER)
        raise ProfileBenchError(f"unknown rows {unknown}; known rows: {known}")
    return rows


def dispatch(args: argparse.Namespace, cfg: PipelineConfig) -> None:
    if args.command == "gen":
        manifest = stage_gen(cfg)
        total = sum(manifest["counts"].values())
        print(f"wrote {total} sessions to {cfg.out_dir}")
    elif args.command == "featurize":
        info = stage_featurize(cfg)
        print(f"featurized {info['games']} games into {info['windows']} windows")
    elif args.command == "balance":
        info = stage_balance(cfg)
        print(
            f"balanced to target {info['target']} windows/class "
            f"(imbalance ratio {info['imbalance_ratio']:.3f})"
        )
    elif args.command == "split":
        info = stage_split(cfg)
        counts = info["games"]
        print(
            f"split games train/val/test = "
            f"{counts['train']}/{counts['val']}/{counts['test']}"
        )
    elif args.command == "train":
        status = stage_train(cfg, parse_rows(args))
        for row_id, state in status.items():
            print(f"{row_id}: {state}")
    elif args.command == "eval":
        reports = stage_eval(cfg, parse_rows(args))
        for r in reports:
            if r.failed:
                print(f"{r.name}: FAILED ({r.error})")
            else:
                print(f"{r.name}: accuracy {r.accuracies['main']:.4f} on {r.n_samples} samples")
        print(f"reports under {cfg.out_dir}/results")
    elif args.command == "report":
        print(stage_report(cfg), end="")
    elif args.command == "run-all":
        stage_gen(cfg)
        stage_featurize(cfg)
        stage_balance(cfg)
        stage_split(cfg)
        stage_train(cfg)
        stage_eval(cfg)
        print(stage_report(cfg), end="")
    else:  # pragma: no cover - argparse enforces the choices
        raise ProfileBenchError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        print(f"effective master seed: {cfg.master_seed}")
        dispatch(args, cfg)
    except SchemaMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except IoFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ProfileBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
