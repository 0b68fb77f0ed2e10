"""Experiment orchestration over persistent run directories.

A run is a directory under the run root (env ``INFOBIAS_RUN_ROOT`` or
``./runs``) holding a config snapshot, per-(fold, seed) prediction files
and epoch histories, per-seed pooled metrics, a cross-seed aggregate,
stratified analyses, and an optional t-test against a baseline run.  The
manifest indexes every artifact with its digest.  Artifacts are
append-only: a completed (fold, seed) job is never recomputed or
rewritten, so re-running a finished config is a no-op and reports are
byte-identical across reruns.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .corpus import Corpus, parse_corpus
from .embeddings import EmbeddingTable, coverage_check, read_embeddings
from .errors import ConfigError, FormatError, MissingInputError, ValidationError
from .evaluation import (
    STRATA_SCHEMES,
    MetricReport,
    SeedAggregate,
    TTestResult,
    aggregate_seeds,
    independent_t_test,
    load_mpqa_lexicon,
    prf1,
    stratify,
)
from .model import (
    ContextVariant,
    ModelConfig,
    TrainConfig,
    build_items,
    build_tag_items,
    load_checkpoint,
    predict,
    predict_tagger,
    save_checkpoint,
    train,
)
from .model.predictions import PredictionSet, load_predictions, save_predictions
from .splits import FoldPlan, load_fold_plan

RUN_ROOT_ENV = "INFOBIAS_RUN_ROOT"


def default_run_root() -> Path:
    return Path(os.environ.get(RUN_ROOT_ENV, "runs"))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Run configuration


@dataclass(frozen=True)
class RunConfig:
    """One experiment: a variant trained across folds and seeds.

    ``embeddings`` may contain a ``{fold}`` placeholder resolving to one
    table per fold; without it a single table serves every fold.
    """

    run_id: str
    corpus: str
    fold_plan: str
    embeddings: str
    variant: str
    hidden: int
    layers: int
    epochs: int = 150
    learning_rate: float = 1e-3
    batch_size: int = 32
    seeds: tuple[int, ...] = (0,)
    folds: tuple[int, ...] | None = None  # None = all folds in the plan
    source_dim: int = 8
    alpha: float = 0.05
    baseline_run: str | None = None
    jobs: int = 1
    max_core: int = 5  # window length L for the tagger variant
    lexicon: str | None = None
    save_models: bool = False
    class_weights: tuple[float, float] = (1.0, 1.0)
    grad_clip: float = 0.0
    dropout: float = 0.0

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["seeds"] = list(self.seeds)
        out["folds"] = None if self.folds is None else list(self.folds)
        out["class_weights"] = list(self.class_weights)
        return out


_REQUIRED_FIELDS = ("run_id", "corpus", "fold_plan", "embeddings", "variant", "hidden", "layers")


def load_run_config(source, overrides: dict | None = None) -> RunConfig:
    """Read a config from a JSON file path or a dict, applying overrides."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise MissingInputError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    else:
        doc = dict(source)
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    if overrides:
        doc.update({k: v for k, v in overrides.items() if v is not None})

    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
    missing = [f for f in _REQUIRED_FIELDS if f not in doc]
    if missing:
        raise ConfigError(f"config missing required field(s): {', '.join(missing)}")

    ContextVariant.parse(doc["variant"])
    if "seeds" in doc:
        doc["seeds"] = tuple(int(s) for s in doc["seeds"])
    if doc.get("folds") is not None:
        doc["folds"] = tuple(int(f) for f in doc["folds"])
    if "class_weights" in doc:
        cw = doc["class_weights"]
        if len(cw) != 2:
            raise ConfigError("class_weights must have two entries")
        doc["class_weights"] = (float(cw[0]), float(cw[1]))
    try:
        cfg = RunConfig(**doc)
    except TypeError as exc:
        raise ConfigError(f"bad run config: {exc}") from None
    if not cfg.seeds:
        raise ConfigError("at least one seed is required")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be at least 1")
    return cfg


def _emb_path(pattern: str, fold: int) -> str:
    return pattern.format(fold=fold) if "{fold}" in pattern else pattern


# ---------------------------------------------------------------------------
# Manifest


@dataclass
class RunManifest:
    run_id: str
    variant: str
    corpus_path: str
    corpus_digest: str
    fold_plan_path: str
    fold_plan_digest: str
    embeddings: dict[str, str]  # resolved path -> digest
    seeds: list[int]
    folds: list[int]
    config: dict
    created_at: str
    status: str = "partial"
    artifacts: dict[str, str] = field(default_factory=dict)  # relative path -> digest

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunManifest":
        return cls(**doc)


def _manifest_path(run_dir: Path) -> Path:
    return run_dir / "manifest.json"


def _write_json(path: Path, doc) -> None:
    with path.open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_manifest(run_dir) -> RunManifest:
    path = _manifest_path(Path(run_dir))
    if not path.exists():
        raise MissingInputError(f"no manifest at {path}")
    try:
        return RunManifest.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, TypeError) as exc:
        raise FormatError(f"{path}: bad manifest: {exc}") from None


def verify_run(run_dir) -> list[str]:
    """Check that every artifact the manifest references exists with the
    recorded digest; returns a list of problems (empty when clean)."""
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    problems = []
    for rel, digest in sorted(manifest.artifacts.items()):
        path = run_dir / rel
        if not path.exists():
            problems.append(f"missing artifact: {rel}")
        elif file_digest(path) != digest:
            problems.append(f"digest mismatch: {rel}")
    return problems


# ---------------------------------------------------------------------------
# Single (fold, seed) job


def _model_config(cfg: RunConfig, input_dim: int) -> ModelConfig:
    return ModelConfig.for_variant(
        cfg.variant,
        input_dim=input_dim,
        hidden=cfg.hidden,
        layers=cfg.layers,
        source_dim=cfg.source_dim,
    )


def _train_config(cfg: RunConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        seed=seed,
        class_weights=cfg.class_weights,
        grad_clip=cfg.grad_clip,
        dropout=cfg.dropout,
    )


def _check_fold_tag(table: EmbeddingTable, fold: int, path: str) -> None:
    if table.fold_tag is not None and table.fold_tag != fold:
        raise ValidationError(
            f"{path} declares fold {table.fold_tag} but is used for fold {fold}"
        )


def run_job(config: RunConfig, fold: int, seed: int, run_dir) -> dict[str, str]:
    """Train one (fold, seed) and write its artifacts; returns their paths.

    Self-contained on purpose: loads its own inputs so jobs can run in
    separate processes.
    """
    run_dir = Path(run_dir)
    preds_rel = f"preds.fold{fold}.seed{seed}.jsonl"
    hist_rel = f"history.fold{fold}.seed{seed}.json"
    model_rel = f"model.fold{fold}.seed{seed}.cim1"
    preds_path = run_dir / preds_rel
    if preds_path.exists():
        load_predictions(preds_path)  # fail loudly on a corrupt leftover
        return {}

    corpus = parse_corpus(config.corpus)
    plan = load_fold_plan(config.fold_plan)
    table = read_embeddings(_emb_path(config.embeddings, fold))
    _check_fold_tag(table, fold, _emb_path(config.embeddings, fold))
    fold_def = plan.folds[fold]
    variant = ContextVariant.parse(config.variant)
    mcfg = _model_config(config, table.dim)
    tcfg = _train_config(config, seed)

    if variant is ContextVariant.WINDOW_TAGGER:
        tr = build_tag_items(corpus, table, config.max_core, fold_def.train_story_ids)
        dv = build_tag_items(corpus, table, config.max_core, fold_def.dev_story_ids)
        te = build_tag_items(corpus, table, config.max_core, fold_def.test_story_ids)
        result = train(tr, dv, mcfg, tcfg)
        preds = predict_tagger(result.params, te, fold=fold, seed=seed)
    else:
        tr = build_items(corpus, table, mcfg, fold_def.train_story_ids)
        dv = build_items(corpus, table, mcfg, fold_def.dev_story_ids)
        te = build_items(corpus, table, mcfg, fold_def.test_story_ids)
        result = train(tr, dv, mcfg, tcfg)
        preds = predict(result.params, te, fold=fold, seed=seed)

    save_predictions(preds, preds_path)
    _write_json(
        run_dir / hist_rel,
        {
            "fold": fold,
            "seed": seed,
            "best_epoch": result.best_epoch,
            "best_dev_f1": result.best_dev_f1,
            "epochs": [
                {
                    "epoch": e.epoch,
                    "train_loss": e.train_loss,
                    "dev_f1": e.dev_f1,
                }
                for e in result.history
            ],
        },
    )
    out = {preds_rel: str(preds_path), hist_rel: str(run_dir / hist_rel)}
    if config.save_models:
        save_checkpoint(result.params, run_dir / model_rel)
        out[model_rel] = str(run_dir / model_rel)
    return out


def _job_entry(args) -> None:
    config_doc, fold, seed, run_dir = args
    run_job(load_run_config(config_doc), fold, seed, run_dir)


# ---------------------------------------------------------------------------
# Full experiment


def _pool_seed_predictions(run_dir: Path, folds, seed: int) -> PredictionSet:
    pooled = PredictionSet()
    for fold in folds:
        part = load_predictions(run_dir / f"preds.fold{fold}.seed{seed}.jsonl")
        for entry in part:
            pooled.add(entry)
    pooled.by_id()  # raises on duplicate ids across folds
    return pooled


def run_experiment(config, run_root=None, log=print) -> RunManifest:
    """Execute a full experiment config; resumable per completed (fold, seed).

    Validates corpus, fold plan, and embedding coverage before any
    training starts, then trains variant x folds x seeds, pools each
    seed's folds into corpus-wide predictions, aggregates across seeds,
    writes stratified analyses, and runs a t-test against the baseline
    run when one is named.
    """
    cfg = config if isinstance(config, RunConfig) else load_run_config(config)
    root = Path(run_root) if run_root is not None else default_run_root()
    run_dir = root / cfg.run_id
    run_dir.mkdir(parents=True, exist_ok=True)

    corpus = parse_corpus(cfg.corpus)
    plan = load_fold_plan(cfg.fold_plan)
    _validate_plan_against_corpus(plan, corpus)
    folds = list(cfg.folds) if cfg.folds is not None else list(range(plan.k))
    for fold in folds:
        if not 0 <= fold < plan.k:
            raise ConfigError(f"fold {fold} out of range for a {plan.k}-fold plan")

    emb_digests: dict[str, str] = {}
    for fold in folds:
        path = _emb_path(cfg.embeddings, fold)
        if not Path(path).exists():
            raise MissingInputError(f"embedding file not found: {path}")
        if path not in emb_digests:
            table = read_embeddings(path)
            _check_fold_tag(table, fold, path)
            missing = coverage_check(table, corpus)
            if missing:
                shown = ", ".join(missing[:10])
                more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
                raise MissingInputError(
                    f"{path} lacks {len(missing)} corpus sentence(s): {shown}{more}"
                )
            emb_digests[path] = file_digest(path)

    variant = ContextVariant.parse(cfg.variant)
    if variant.is_star and cfg.source_dim <= 0:
        raise ConfigError("star variants need a positive source_dim")

    config_path = run_dir / "config.json"
    snapshot = cfg.to_dict()
    if config_path.exists():
        existing = json.loads(config_path.read_text(encoding="utf-8"))
        if existing != snapshot:
            raise ValidationError(
                f"{run_dir} already holds a different config; "
                "run directories are append-only, pick a new run_id"
            )
    else:
        _write_json(config_path, snapshot)

    if _manifest_path(run_dir).exists():
        created_at = load_manifest(run_dir).created_at
    else:
        created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")

    jobs = [(fold, seed) for fold in folds for seed in cfg.seeds]
    pending = [
        (f, s) for f, s in jobs
        if not (run_dir / f"preds.fold{f}.seed{s}.jsonl").exists()
    ]
    if log:
        log(f"[{cfg.run_id}] {len(jobs)} job(s), {len(pending)} to run")
    if cfg.jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            list(
                pool.map(
                    _job_entry,
                    [(snapshot, f, s, str(run_dir)) for f, s in pending],
                )
            )
    else:
        for f, s in pending:
            run_job(cfg, f, s, run_dir)
            if log:
                log(f"[{cfg.run_id}] fold {f} seed {s} done")

    # Per-seed pooling, aggregation, strata.
    reports: list[MetricReport] = []
    for seed in cfg.seeds:
        pooled = _pool_seed_predictions(run_dir, folds, seed)
        report = prf1(pooled)
        reports.append(report)
        metrics_rel = f"seed{seed}.metrics.json"
        if not (run_dir / metrics_rel).exists():
            _write_json(run_dir / metrics_rel, report.to_dict())
        analysis_rel = f"analysis.seed{seed}.json"
        if not (run_dir / analysis_rel).exists():
            _write_json(run_dir / analysis_rel, _analyses(pooled, corpus, cfg))

    with warnings.catch_warnings():
        if len(reports) < 2:
            warnings.simplefilter("always")
        aggregate = aggregate_seeds(reports, allow_single=True)
    agg_doc = aggregate.to_dict()
    agg_doc["pooling"] = "per-seed predictions pooled across folds before scoring"
    agg_path = run_dir / "aggregate.json"
    if not agg_path.exists():
        _write_json(agg_path, agg_doc)

    if cfg.baseline_run:
        ttest_path = run_dir / "ttest.json"
        if not ttest_path.exists():
            baseline_dir = _resolve_run_dir(cfg.baseline_run, root)
            result, improved = _test_against(aggregate, baseline_dir, cfg.alpha)
            doc = result.to_dict()
            doc["baseline"] = str(baseline_dir)
            doc["improvement"] = improved
            _write_json(ttest_path, doc)

    artifacts = {
        str(p.relative_to(run_dir)): file_digest(p)
        for p in sorted(run_dir.iterdir())
        if p.is_file() and p.name != "manifest.json"
    }
    manifest = RunManifest(
        run_id=cfg.run_id,
        variant=cfg.variant,
        corpus_path=str(cfg.corpus),
        corpus_digest=corpus.provenance,
        fold_plan_path=str(cfg.fold_plan),
        fold_plan_digest=file_digest(cfg.fold_plan),
        embeddings=emb_digests,
        seeds=list(cfg.seeds),
        folds=folds,
        config=snapshot,
        created_at=created_at,
        status="complete",
        artifacts=artifacts,
    )
    _write_json(_manifest_path(run_dir), manifest.to_dict())
    return manifest


def _validate_plan_against_corpus(plan: FoldPlan, corpus: Corpus) -> None:
    corpus_stories = set(corpus.story_ids())
    plan_stories = set(plan.story_ids)
    if corpus_stories != plan_stories:
        extra = sorted(plan_stories - corpus_stories)[:5]
        missing = sorted(corpus_stories - plan_stories)[:5]
        raise ValidationError(
            "fold plan does not match the corpus "
            f"(plan-only: {extra}, corpus-only: {missing})"
        )


def _analyses(pooled: PredictionSet, corpus: Corpus, cfg: RunConfig) -> dict:
    lexicon = load_mpqa_lexicon(cfg.lexicon) if cfg.lexicon else None
    out = {}
    for scheme in STRATA_SCHEMES:
        if scheme == "subjectivity" and lexicon is None:
            continue
        out[scheme] = stratify(pooled, corpus, scheme, lexicon).to_dict()
    return out


# ---------------------------------------------------------------------------
# Run comparison


def _resolve_run_dir(name_or_path: str, root: Path) -> Path:
    p = Path(name_or_path)
    if _manifest_path(p).exists():
        return p
    candidate = root / name_or_path
    if _manifest_path(candidate).exists():
        return candidate
    raise MissingInputError(f"no run found at {name_or_path!r}")


def _load_aggregate(run_dir: Path) -> dict:
    path = run_dir / "aggregate.json"
    if not path.exists():
        raise MissingInputError(f"{run_dir} has no aggregate.json; incomplete run")
    return json.loads(path.read_text(encoding="utf-8"))


def _test_against(
    aggregate: SeedAggregate, baseline_dir: Path, alpha: float
) -> tuple[TTestResult, bool]:
    base = _load_aggregate(baseline_dir)
    a = list(aggregate.f1_values)
    b = [float(v) for v in base["f1_values"]]
    result = independent_t_test(a, b, alpha=alpha)
    improved = result.significant and (sum(a) / len(a) > sum(b) / len(b))
    return result, improved


@dataclass(frozen=True)
class CompareReport:
    run_a: str
    run_b: str
    ttest: TTestResult
    dagger: bool  # run A significantly better than run B
    table: str


def compare_runs(run_a, run_b, alpha: float = 0.05, run_root=None) -> CompareReport:
    """Side-by-side comparison of two completed runs sharing inputs.

    The t-test runs on per-seed F1 values; the dagger marker appears when
    run A is significantly better than run B at the given alpha.
    """
    root = Path(run_root) if run_root is not None else default_run_root()
    dir_a = _resolve_run_dir(str(run_a), root)
    dir_b = _resolve_run_dir(str(run_b), root)
    man_a = load_manifest(dir_a)
    man_b = load_manifest(dir_b)
    if man_a.corpus_digest != man_b.corpus_digest:
        raise ValidationError("runs were made on different corpora")
    if man_a.fold_plan_digest != man_b.fold_plan_digest:
        raise ValidationError("runs use different fold plans")

    agg_a = _load_aggregate(dir_a)
    agg_b = _load_aggregate(dir_b)
    a = [float(v) for v in agg_a["f1_values"]]
    b = [float(v) for v in agg_b["f1_values"]]
    ttest = independent_t_test(a, b, alpha=alpha)
    mean_a = sum(a) / len(a)
    mean_b = sum(b) / len(b)
    dagger = ttest.significant and mean_a > mean_b

    def fmt(agg, marked):
        def ms(block):
            std = block["std"]
            if std is None:
                return f"{block['mean']:.2f}"
            return f"{block['mean']:.2f} ± {std:.2f}"

        mark = " †" if marked else ""
        return (ms(agg["precision"]), ms(agg["recall"]), ms(agg["f1"]) + mark)

    rows = [
        (man_a.run_id, man_a.variant, *fmt(agg_a, dagger)),
        (man_b.run_id, man_b.variant, *fmt(agg_b, False)),
    ]
    header = ("run", "variant", "P", "R", "F1")
    widths = [max(len(str(r[c])) for r in [header, *rows]) for c in range(len(header))]
    lines = ["  ".join(str(v).ljust(w) for v, w in zip(r, widths)) for r in [header, *rows]]
    lines.append(
        f"t={ttest.t:.3f}  df={ttest.df:.0f}  p={ttest.p:.4g}  alpha={alpha}"
        + ("  † significant improvement" if dagger else "")
    )
    return CompareReport(
        run_a=str(dir_a), run_b=str(dir_b), ttest=ttest, dagger=dagger,
        table="\n".join(lines),
    )
