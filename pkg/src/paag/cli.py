"""Command line entry point.

Subcommands: train, eval, generate, synth-data, gradcheck. A flat
key-value config file supplies defaults; the listed flags override it.
``PAAG_LOG`` selects the logging level (debug, info, warning, error).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from paag import config as config_mod
from paag import gradcheck as gradcheck_mod
from paag import train as train_mod
from paag.config import RunConfig
from paag.data import save_jsonl
from paag.errors import PaagError
from paag.synth import SyntheticSpec, generate, split


def _configure_logging() -> None:
    level_name = os.environ.get("PAAG_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key-value config file")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--variant", choices=("RAGF", "RAGFD", "RAGFWD", "PAAG"),
                     default=None)
    sub.add_argument("--beam", type=int, default=None, dest="beam")
    sub.add_argument("--critic-iters", type=int, default=None, dest="critic_iters")
    sub.add_argument("--attend-review-words", action="store_true", default=None)
    sub.add_argument("--per-step-critic", action="store_true", default=None)


def load_config(args: argparse.Namespace) -> RunConfig:
    cfg = config_mod.load(args.config) if args.config else RunConfig()
    overrides = {
        "seed": args.seed,
        "variant": args.variant,
        "beam_size": args.beam,
        "critic_iters": args.critic_iters,
        "attend_review_words": args.attend_review_words,
        "per_step_critic": args.per_step_critic,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paag",
        description="review-grounded product question answering")
    sub = parser.add_subparsers(dest="mode", required=True)

    p_train = sub.add_parser("train", help="train a model variant")
    _add_common(p_train)
    p_train.add_argument("--train-path", default=None)
    p_train.add_argument("--out-dir", default=None)
    p_train.add_argument("--epochs", type=int, default=None)

    p_eval = sub.add_parser("eval", help="score generations against references")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--report", default=None, help="also write the JSON here")
    p_eval.add_argument("--per-example", default=None, help="per-example CSV path")

    p_gen = sub.add_parser("generate", help="write generation traces as JSON lines")
    _add_common(p_gen)
    p_gen.add_argument("--checkpoint", required=True)
    p_gen.add_argument("--data", required=True)
    p_gen.add_argument("--out", required=True)

    p_synth = sub.add_parser("synth-data", help="build a synthetic QA corpus")
    _add_common(p_synth)
    p_synth.add_argument("--out-dir", default=None)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    _add_common(p_grad)

    return parser


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    if args.train_path:
        cfg.train_path = args.train_path
    if args.out_dir:
        cfg.out_dir = args.out_dir
    if args.epochs is not None:
        cfg.epochs = args.epochs
    result = train_mod.train(cfg)
    print(f"trained {cfg.variant} for {cfg.epochs} epochs, "
          f"final loss_g {result.final_loss_g:.4f}")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"curves: {result.curves_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    report = train_mod.evaluate(args.checkpoint, args.data,
                                beam_size=args.beam or cfg.beam_size,
                                per_example_csv=args.per_example)
    text = json.dumps(report, indent=1, sort_keys=True)
    print(text)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    count = train_mod.generate(args.checkpoint, args.data, args.out,
                               beam_size=args.beam or cfg.beam_size)
    print(f"wrote {count} generations to {args.out}")
    return 0


def cmd_synth_data(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    out_dir = args.out_dir or cfg.out_dir
    spec = SyntheticSpec(
        num_products=cfg.synth_products,
        attributes_per_product=cfg.synth_attributes,
        reviews_per_product=cfg.synth_reviews,
        noise_rate=cfg.synth_noise,
        vocab_size=cfg.synth_vocab,
    )
    records = generate(spec, seed=cfg.seed)
    train_recs, held_recs = split(records, cfg.heldout_frac, seed=cfg.seed)
    os.makedirs(out_dir, exist_ok=True)
    train_path = os.path.join(out_dir, "train.jsonl")
    held_path = os.path.join(out_dir, "heldout.jsonl")
    save_jsonl(train_path, train_recs)
    save_jsonl(held_path, held_recs)
    print(f"wrote {len(train_recs)} train examples to {train_path}")
    print(f"wrote {len(held_recs)} heldout examples to {held_path}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else 0
    return gradcheck_mod.main(seed=seed)


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "generate": cmd_generate,
    "synth-data": cmd_synth_data,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.mode](args)
    except PaagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
