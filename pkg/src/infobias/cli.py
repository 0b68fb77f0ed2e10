"""Command-line interface.

Subcommands cover the full pipeline: corpus validation, fold-plan
creation, embedding coverage checks, training runs, prediction with a
saved checkpoint, scoring, stratified analysis, run comparison, and
synthetic-data generation.  Exit codes: 0 success, 2 validation error,
3 missing input, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import synthetic
from .corpus import corpus_stats, parse_corpus, save_corpus
from .embeddings import coverage_check, read_embeddings, write_embeddings
from .errors import (
    ConfigError,
    MissingInputError,
    NumericalError,
    ValidationError,
)
from .evaluation import (
    STRATA_SCHEMES,
    aggregate_seeds,
    load_mpqa_lexicon,
    prf1,
    stratify,
)
from .model import build_items, build_tag_items, load_checkpoint, predict, predict_tagger
from .model.config import ContextVariant
from .model.predictions import load_predictions, save_predictions
from .runner import (
    compare_runs,
    default_run_root,
    load_run_config,
    run_experiment,
    verify_run,
)
from .splits import (
    load_fold_plan,
    make_sentence_split,
    make_story_folds,
    save_plan,
    verify_no_story_leakage,
)


def _print_json(doc) -> None:
    json.dump(doc, sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_parse(args) -> int:
    corpus = parse_corpus(args.corpus)
    stats = corpus_stats(corpus)
    if args.stats:
        doc = dataclasses.asdict(stats)
        doc["bias_rate"] = round(stats.bias_rate, 2)
        doc["stories"] = len(corpus.stories)
        _print_json(doc)
    else:
        print(
            f"{args.corpus}: valid; {len(corpus.stories)} stories, "
            f"{stats.total_sentences} sentences, "
            f"{stats.biased_sentences} biased ({stats.bias_rate:.2f}%)"
        )
    if args.out:
        save_corpus(corpus, args.out)
        print(f"normalized copy written to {args.out}")
    return 0


def _cmd_split(args) -> int:
    corpus = parse_corpus(args.corpus)
    if args.mode == "story":
        plan = make_story_folds(corpus, k=args.k, seed=args.seed)
        clean, leaks = verify_no_story_leakage(plan)
        if not clean:
            raise ValidationError(f"fold plan leaks stories: {leaks[:5]}")
        save_plan(plan, args.out, corpus)
        print(f"{args.out}: {plan.k} folds over {len(plan.story_ids)} stories")
    else:
        sizes = {"train": args.train, "dev": args.dev, "test": args.test}
        plan = make_sentence_split(corpus, sizes, seed=args.seed)
        save_plan(plan, args.out)
        print(
            f"{args.out}: sentence split "
            f"{args.train}/{args.dev}/{args.test} (leaks article context)"
        )
    return 0


def _cmd_emb_check(args) -> int:
    corpus = parse_corpus(args.corpus)
    table = read_embeddings(args.embeddings)
    missing = coverage_check(table, corpus)
    total = corpus.sentence_count()
    covered = total - len(missing)
    print(
        f"{args.embeddings}: dim={table.dim}, entries={len(table.entries)}, "
        f"covers {covered}/{total} corpus sentences"
    )
    if table.encoder_tag:
        print(f"encoder_tag: {table.encoder_tag}")
    if missing:
        shown = missing[: args.show]
        print(f"missing {len(missing)} id(s): {', '.join(shown)}"
              + ("" if len(missing) <= args.show else " ..."))
        raise MissingInputError(
            f"{args.embeddings} does not cover the corpus"
        )
    return 0


def _train_overrides(args) -> dict:
    over = {
        "run_id": args.run_id,
        "corpus": args.corpus,
        "fold_plan": args.fold_plan,
        "embeddings": args.embeddings,
        "variant": args.variant,
        "hidden": args.hidden,
        "layers": args.layers,
        "epochs": args.epochs,
        "learning_rate": args.learning_rate,
        "batch_size": args.batch_size,
        "source_dim": args.source_dim,
        "alpha": args.alpha,
        "baseline_run": args.baseline_run,
        "jobs": args.jobs,
        "max_core": args.max_core,
        "lexicon": args.lexicon,
        "grad_clip": args.grad_clip,
        "dropout": args.dropout,
    }
    if args.seeds is not None:
        over["seeds"] = [int(s) for s in args.seeds.split(",") if s]
    if args.folds is not None:
        over["folds"] = [int(f) for f in args.folds.split(",") if f]
    if args.class_weights is not None:
        over["class_weights"] = [float(w) for w in args.class_weights.split(",")]
    if args.save_models:
        over["save_models"] = True
    return over


def _cmd_train(args) -> int:
    if args.config is None and args.run_id is None:
        raise ConfigError("provide --config and/or --run-id with field overrides")
    base = args.config if args.config is not None else {}
    cfg = load_run_config(base, overrides=_train_overrides(args))
    manifest = run_experiment(cfg, run_root=args.run_root)
    run_dir = (Path(args.run_root) if args.run_root else default_run_root()) / cfg.run_id
    print(f"run {manifest.run_id} complete: {len(manifest.artifacts)} artifacts in {run_dir}")
    agg = json.loads((run_dir / "aggregate.json").read_text(encoding="utf-8"))
    f1 = agg["f1"]
    std = "" if f1["std"] is None else f" ± {f1['std']}"
    print(f"F1 {f1['mean']}{std} over {agg['n_seeds']} seed(s)")
    return 0


def _cmd_predict(args) -> int:
    params = load_checkpoint(args.model)
    corpus = parse_corpus(args.corpus)
    table = read_embeddings(args.embeddings)
    story_ids = None
    if args.fold_plan is not None:
        if args.fold is None:
            raise ConfigError("--fold-plan needs --fold to pick the test stories")
        plan = load_fold_plan(args.fold_plan)
        if not 0 <= args.fold < plan.k:
            raise ConfigError(f"fold {args.fold} out of range for k={plan.k}")
        story_ids = plan.folds[args.fold].test_story_ids
    cfg = params.config
    fold = args.fold if args.fold is not None else 0
    if cfg.variant is ContextVariant.WINDOW_TAGGER:
        items = build_tag_items(corpus, table, args.max_core, story_ids)
        preds = predict_tagger(params, items, fold=fold, seed=args.seed)
    else:
        items = build_items(corpus, table, cfg, story_ids)
        preds = predict(params, items, fold=fold, seed=args.seed)
    save_predictions(preds, args.out)
    print(f"{args.out}: {len(preds)} predictions ({cfg.variant.value})")
    return 0


def _cmd_evaluate(args) -> int:
    reports = []
    for path in args.preds:
        preds = load_predictions(path)
        reports.append(prf1(preds))
    doc = {
        "files": [
            {"path": str(p), **r.to_dict()} for p, r in zip(args.preds, reports)
        ]
    }
    if len(reports) > 1:
        doc["aggregate"] = aggregate_seeds(reports).to_dict()
    _print_json(doc)
    return 0


def _strata_table(report) -> str:
    header = ("stratum", "n", "bias%", "P", "R", "F1")
    rows = []
    for s in report.strata:
        if report.recall_only:
            p, f1 = "-", "-"
        else:
            p, f1 = f"{s.metrics.precision:.2f}", f"{s.metrics.f1:.2f}"
        rows.append(
            (s.name, str(s.size), f"{s.bias_rate:.2f}",
             p, f"{s.metrics.recall:.2f}", f1)
        )
    widths = [max(len(r[c]) for r in [header, *rows]) for c in range(len(header))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in [header, *rows]]
    if report.recall_only:
        lines.append("(gold-biased sentences only; precision undefined)")
    return "\n".join(lines)


def _cmd_analyze(args) -> int:
    preds = load_predictions(args.preds)
    corpus = parse_corpus(args.corpus)
    lexicon = load_mpqa_lexicon(args.lexicon) if args.lexicon else None
    schemes = STRATA_SCHEMES if args.scheme == "all" else (args.scheme,)
    out_doc = {}
    for scheme in schemes:
        if scheme == "subjectivity" and lexicon is None:
            if args.scheme == "subjectivity":
                raise ConfigError("subjectivity scheme needs --lexicon")
            continue
        report = stratify(preds, corpus, scheme, lexicon)
        out_doc[scheme] = report.to_dict()
        print(f"== {scheme} ==")
        print(_strata_table(report))
        print()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(out_doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        print(f"written to {args.out}")
    return 0


def _cmd_compare(args) -> int:
    report = compare_runs(args.run_a, args.run_b, alpha=args.alpha,
                          run_root=args.run_root)
    print(report.table)
    return 0


def _cmd_verify(args) -> int:
    problems = verify_run(args.run)
    if problems:
        for p in problems:
            print(p)
        raise ValidationError(f"{args.run}: {len(problems)} problem(s)")
    print(f"{args.run}: manifest and artifacts consistent")
    return 0


def _cmd_synth(args) -> int:
    out_dir = Path(args.out)
    if args.mode == "context":
        exp = synthetic.make_context_experiment(
            n_stories=args.stories, dim=args.dim, seed=args.seed, k=args.k
        )
        paths = synthetic.write_experiment(exp, out_dir)
        n_sents = exp.corpus.sentence_count()
        print(
            f"{out_dir}: context experiment with {len(exp.corpus.stories)} stories, "
            f"{n_sents} sentences, {len(exp.context_dependent_ids)} context-dependent"
        )
        for name, path in sorted(paths.items()):
            print(f"  {name}: {path}")
    else:
        out_dir.mkdir(parents=True, exist_ok=True)
        corpus = synthetic.random_corpus(args.stories, seed=args.seed)
        save_corpus(corpus, out_dir / "corpus.json")
        table = synthetic.random_embeddings(corpus, dim=args.dim, seed=args.seed)
        write_embeddings(table, out_dir / "emb.emb1")
        plan = make_story_folds(corpus, k=args.k, seed=args.seed)
        save_plan(plan, out_dir / "folds.json", corpus)
        print(
            f"{out_dir}: random corpus with {len(corpus.stories)} stories, "
            f"dim-{args.dim} embeddings, {args.k}-fold plan"
        )
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infobias",
        description="Context-informed sentence bias experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="validate a corpus file and report statistics")
    p.add_argument("corpus")
    p.add_argument("--stats", action="store_true", help="full statistics as JSON")
    p.add_argument("--out", default=None, help="write a normalized copy")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("split", help="create a fold plan")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("story", "sentence"), default="story")
    p.add_argument("--k", type=int, default=10, help="fold count (story mode)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", type=int, default=0, help="sentence-mode train size")
    p.add_argument("--dev", type=int, default=0, help="sentence-mode dev size")
    p.add_argument("--test", type=int, default=0, help="sentence-mode test size")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("emb-check", help="check embedding coverage of a corpus")
    p.add_argument("embeddings")
    p.add_argument("corpus")
    p.add_argument("--show", type=int, default=10, help="missing ids to list")
    p.set_defaults(func=_cmd_emb_check)

    p = sub.add_parser("train", help="run a full experiment config")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--run-root", default=None,
                   help="override the run root (else $INFOBIAS_RUN_ROOT or ./runs)")
    p.add_argument("--run-id", default=None)
    p.add_argument("--corpus", default=None)
    p.add_argument("--fold-plan", default=None)
    p.add_argument("--embeddings", default=None,
                   help="EMB1 path; may contain a {fold} placeholder")
    p.add_argument("--variant", default=None,
                   choices=[v.value for v in ContextVariant])
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seeds", default=None, help="comma-separated list")
    p.add_argument("--folds", default=None, help="comma-separated subset")
    p.add_argument("--source-dim", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--baseline-run", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--max-core", type=int, default=None)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--class-weights", default=None, help="e.g. 1.0,4.0")
    p.add_argument("--grad-clip", type=float, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--save-models", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="predict with a saved checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fold-plan", default=None,
                   help="restrict to one fold's test stories")
    p.add_argument("--fold", type=int, default=None)
    p.add_argument("--seed", type=int, default=0, help="recorded in the output")
    p.add_argument("--max-core", type=int, default=5,
                   help="window length for the tagger variant")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="score prediction files")
    p.add_argument("preds", nargs="+")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("analyze", help="stratified error analysis")
    p.add_argument("--preds", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--scheme", default="all",
                   choices=("all", *STRATA_SCHEMES))
    p.add_argument("--lexicon", default=None, help="MPQA lexicon file")
    p.add_argument("--out", default=None, help="also write JSON here")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("compare", help="t-test two runs on per-seed F1")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--run-root", default=None)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("verify", help="check a run directory against its manifest")
    p.add_argument("run")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("synth", help="generate synthetic corpora and embeddings")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("context", "random"), default="context")
    p.add_argument("--stories", type=int, default=200)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
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
