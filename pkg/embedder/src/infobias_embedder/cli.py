"""Command line entry point for producing embedding files."""

from __future__ import annotations

import argparse
import logging
import sys

from infobias.corpus import parse_corpus
from infobias.errors import ConfigError, MissingInputError, NumericalError, ValidationError
from infobias.splits import load_fold_plan

from .encode import encode_fold
from .recipe import EncoderRecipe


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infobias-embed",
        description="fine-tune an encoder on one fold and write EMB1 embeddings",
    )
    parser.add_argument("--corpus", required=True, help="corpus JSON file")
    parser.add_argument("--folds", help="fold plan JSON (required unless --no-finetune)")
    parser.add_argument("--fold", type=int, help="fold index within the plan")
    parser.add_argument("--out", required=True, help="EMB1 output path")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--no-finetune",
        action="store_true",
        help="skip training and embed with the raw pretrained encoder",
    )
    parser.add_argument("--base-model", default="roberta-base")
    return parser


def _run(args) -> int:
    if (args.folds is None) != (args.fold is None):
        raise ConfigError("--folds and --fold must be given together")
    if not args.no_finetune and args.folds is None:
        raise ConfigError("fine-tuning needs --folds and --fold; or pass --no-finetune")
    corpus = parse_corpus(args.corpus)
    plan = load_fold_plan(args.folds) if args.folds is not None else None
    recipe = EncoderRecipe(base_model=args.base_model, finetune=not args.no_finetune)
    table = encode_fold(corpus, plan, args.fold, recipe, args.seed, args.out)
    print(f"wrote {len(table)} embeddings (dim {table.dim}) to {args.out}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MissingInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
