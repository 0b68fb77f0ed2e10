"""Run orchestration: config loading, append-only run directories,
byte-identical reruns, resume, parallel execution, and run comparison.
"""

import json
import time
from pathlib import Path

import pytest

from conftest import fill_table, make_corpus_doc
from infobias.corpus import parse_corpus, parse_corpus_dict, save_corpus
from infobias.embeddings import EmbeddingTable, write_embeddings
from infobias.errors import (
    ConfigError,
    FormatError,
    MissingInputError,
    ValidationError,
)
from infobias.evaluation import prf1
from infobias.model.predictions import load_predictions
from infobias.runner import (
    RunConfig,
    compare_runs,
    file_digest,
    load_manifest,
    load_run_config,
    run_experiment,
    verify_run,
)
from infobias.splits import make_story_folds, save_plan


def write_dataset(root: Path, n_stories=6, n_sentences=3, dim=4, k=3, seed=0):
    corpus = parse_corpus_dict(
        make_corpus_doc(n_stories=n_stories, n_sentences=n_sentences)
    )
    save_corpus(corpus, root / "corpus.json")
    table = fill_table(corpus, dim=dim, seed=seed)
    write_embeddings(table, root / "emb.emb1")
    plan = make_story_folds(corpus, k=k, seed=seed)
    save_plan(plan, root / "folds.json", corpus)
    return corpus, table, plan


def base_config(root: Path, run_id: str, **extra) -> RunConfig:
    doc = {
        "run_id": run_id,
        "corpus": str(root / "corpus.json"),
        "fold_plan": str(root / "folds.json"),
        "embeddings": str(root / "emb.emb1"),
        "variant": "target_only",
        "hidden": 2,
        "layers": 1,
        "epochs": 2,
        "batch_size": 8,
        "seeds": [0, 1],
    }
    doc.update(extra)
    return load_run_config(doc)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("runner")
    write_dataset(root)
    manifest = run_experiment(
        base_config(root, "seq"), run_root=root / "runs", log=None
    )
    return {"root": root, "runs": root / "runs", "manifest": manifest}


# ---------------------------------------------------------------------------
# Config loading


def test_load_run_config_from_file_with_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "run_id": "r", "corpus": "c", "fold_plan": "f", "embeddings": "e",
        "variant": "evcim", "hidden": 4, "layers": 2,
    }))
    cfg = load_run_config(path, overrides={"epochs": 7, "hidden": None})
    assert cfg.epochs == 7
    assert cfg.hidden == 4  # None overrides are ignored
    assert cfg.seeds == (0,)
    assert cfg.folds is None


def test_load_run_config_missing_file(tmp_path):
    with pytest.raises(MissingInputError):
        load_run_config(tmp_path / "nope.json")


def test_load_run_config_rejects_unknown_field():
    with pytest.raises(ConfigError, match="unknown config field"):
        base_config(Path("."), "r", extra_knob=1)


def test_load_run_config_rejects_missing_required():
    with pytest.raises(ConfigError, match="missing required"):
        load_run_config({"run_id": "r", "corpus": "c"})


def test_load_run_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        base_config(Path("."), "r", seeds=[])
    with pytest.raises(ConfigError):
        base_config(Path("."), "r", jobs=0)
    with pytest.raises(ConfigError):
        base_config(Path("."), "r", variant="mega_cim")
    with pytest.raises(ConfigError):
        base_config(Path("."), "r", class_weights=[1.0])


# ---------------------------------------------------------------------------
# Artifacts and manifest


def test_run_writes_expected_artifacts(workspace):
    run_dir = workspace["runs"] / "seq"
    names = {p.name for p in run_dir.iterdir()}
    expected = {"config.json", "manifest.json", "aggregate.json"}
    for seed in (0, 1):
        expected.add(f"seed{seed}.metrics.json")
        expected.add(f"analysis.seed{seed}.json")
        for fold in range(3):
            expected.add(f"preds.fold{fold}.seed{seed}.jsonl")
            expected.add(f"history.fold{fold}.seed{seed}.json")
    assert names == expected


def test_manifest_records_digests_and_status(workspace):
    man = workspace["manifest"]
    root = workspace["root"]
    assert man.status == "complete"
    assert man.corpus_digest == file_digest(root / "corpus.json")
    assert man.fold_plan_digest == file_digest(root / "folds.json")
    assert man.embeddings == {
        str(root / "emb.emb1"): file_digest(root / "emb.emb1")
    }
    assert man.seeds == [0, 1]
    assert man.folds == [0, 1, 2]
    run_dir = workspace["runs"] / "seq"
    on_disk = {p.name for p in run_dir.iterdir() if p.name != "manifest.json"}
    assert set(man.artifacts) == on_disk
    assert load_manifest(run_dir).to_dict() == man.to_dict()


def test_verify_clean_then_tampered(workspace, tmp_path):
    run_dir = workspace["runs"] / "seq"
    assert verify_run(run_dir) == []
    import shutil
    copy = tmp_path / "copy"
    shutil.copytree(run_dir, copy)
    (copy / "seed0.metrics.json").write_text("{}\n")
    (copy / "aggregate.json").unlink()
    problems = verify_run(copy)
    assert "digest mismatch: seed0.metrics.json" in problems
    assert "missing artifact: aggregate.json" in problems


def test_seed_metrics_match_pooled_predictions(workspace):
    run_dir = workspace["runs"] / "seq"
    pooled = []
    for fold in range(3):
        pooled.extend(load_predictions(run_dir / f"preds.fold{fold}.seed0.jsonl"))
    from infobias.model.predictions import PredictionSet
    expected = prf1(PredictionSet(pooled)).to_dict()
    stored = json.loads((run_dir / "seed0.metrics.json").read_text())
    assert stored == expected


def test_aggregate_covers_both_seeds(workspace):
    doc = json.loads((workspace["runs"] / "seq" / "aggregate.json").read_text())
    assert doc["n_seeds"] == 2
    assert len(doc["f1_values"]) == 2
    assert "pooling" in doc


def test_analysis_has_all_lexicon_free_schemes(workspace):
    doc = json.loads(
        (workspace["runs"] / "seq" / "analysis.seed0.json").read_text()
    )
    assert set(doc) == {"publisher", "leaning", "quote", "lexical", "length"}


# ---------------------------------------------------------------------------
# Append-only semantics


def test_rerun_is_byte_identical(workspace):
    run_dir = workspace["runs"] / "seq"
    before = {p.name: file_digest(p) for p in run_dir.iterdir()}
    man = run_experiment(base_config(workspace["root"], "seq"),
                         run_root=workspace["runs"], log=None)
    after = {p.name: file_digest(p) for p in run_dir.iterdir()}
    assert after == before
    assert man.created_at == workspace["manifest"].created_at


def test_changed_config_same_run_id_rejected(workspace):
    with pytest.raises(ValidationError, match="append-only"):
        run_experiment(base_config(workspace["root"], "seq", epochs=3),
                       run_root=workspace["runs"], log=None)


def test_resume_recomputes_only_missing_jobs(workspace):
    run_dir = workspace["runs"] / "seq"
    target = run_dir / "preds.fold1.seed0.jsonl"
    original = file_digest(target)
    untouched = run_dir / "preds.fold0.seed0.jsonl"
    untouched_mtime = untouched.stat().st_mtime_ns
    target.unlink()
    (run_dir / "history.fold1.seed0.json").unlink()
    time.sleep(0.01)
    run_experiment(base_config(workspace["root"], "seq"),
                   run_root=workspace["runs"], log=None)
    assert file_digest(target) == original
    assert untouched.stat().st_mtime_ns == untouched_mtime


def test_corrupt_leftover_predictions_fail_loudly(workspace, tmp_path):
    root = tmp_path
    write_dataset(root)
    cfg = base_config(root, "corrupt", seeds=[0])
    run_dir = tmp_path / "runs" / "corrupt"
    run_dir.mkdir(parents=True)
    (run_dir / "preds.fold0.seed0.jsonl").write_text("not json\n")
    with pytest.raises(FormatError):
        run_experiment(cfg, run_root=tmp_path / "runs", log=None)


# ---------------------------------------------------------------------------
# Validation before training


def test_missing_embedding_coverage_blocks_run(tmp_path):
    corpus, table, _ = write_dataset(tmp_path)
    del table.entries["00nyt01"]
    write_embeddings(table, tmp_path / "gap.emb1")
    cfg = base_config(tmp_path, "gap", embeddings=str(tmp_path / "gap.emb1"),
                      seeds=[0])
    with pytest.raises(MissingInputError, match="00nyt01"):
        run_experiment(cfg, run_root=tmp_path / "runs", log=None)
    run_dir = tmp_path / "runs" / "gap"
    assert not list(run_dir.glob("preds.*"))


def test_star_variant_needs_positive_source_dim(tmp_path):
    write_dataset(tmp_path)
    cfg = base_config(tmp_path, "star", variant="artcim_star", source_dim=0,
                      seeds=[0])
    with pytest.raises(ConfigError, match="source_dim"):
        run_experiment(cfg, run_root=tmp_path / "runs", log=None)


def test_fold_out_of_range_rejected(tmp_path):
    write_dataset(tmp_path)
    cfg = base_config(tmp_path, "oor", folds=[5], seeds=[0])
    with pytest.raises(ConfigError, match="fold 5"):
        run_experiment(cfg, run_root=tmp_path / "runs", log=None)


def test_plan_corpus_mismatch_rejected(tmp_path):
    write_dataset(tmp_path)
    other = parse_corpus_dict(make_corpus_doc(n_stories=5, n_sentences=3))
    save_corpus(other, tmp_path / "other.json")
    cfg = base_config(tmp_path, "mix", corpus=str(tmp_path / "other.json"),
                      seeds=[0])
    with pytest.raises(ValidationError, match="does not match"):
        run_experiment(cfg, run_root=tmp_path / "runs", log=None)


def test_fold_subset_runs_only_those_folds(tmp_path):
    write_dataset(tmp_path)
    cfg = base_config(tmp_path, "sub", folds=[1], seeds=[0])
    # a single-seed run warns that no standard deviation can be reported
    with pytest.warns(RuntimeWarning, match="single seed"):
        man = run_experiment(cfg, run_root=tmp_path / "runs", log=None)
    run_dir = tmp_path / "runs" / "sub"
    assert (run_dir / "preds.fold1.seed0.jsonl").exists()
    assert not (run_dir / "preds.fold0.seed0.jsonl").exists()
    assert man.folds == [1]


# ---------------------------------------------------------------------------
# Per-fold embedding tables


def test_fold_placeholder_resolves_per_fold_tables(tmp_path):
    corpus, table, plan = write_dataset(tmp_path)
    for fold in range(3):
        per = EmbeddingTable(dim=4, fold_tag=fold, encoder_tag=f"t{fold}")
        per.entries = dict(table.entries)
        write_embeddings(per, tmp_path / f"emb.fold{fold}.emb1")
    cfg = base_config(
        tmp_path, "perfold",
        embeddings=str(tmp_path / "emb.fold{fold}.emb1"), seeds=[0],
    )
    with pytest.warns(RuntimeWarning, match="single seed"):
        man = run_experiment(cfg, run_root=tmp_path / "runs", log=None)
    assert len(man.embeddings) == 3
    assert all("emb.fold" in p for p in man.embeddings)


def test_fold_tag_mismatch_rejected(tmp_path):
    corpus, table, plan = write_dataset(tmp_path)
    tagged = EmbeddingTable(dim=4, fold_tag=0)
    tagged.entries = dict(table.entries)
    write_embeddings(tagged, tmp_path / "f0.emb1")
    # a fold-0 table offered for every fold trips the guard on fold 1
    cfg = base_config(tmp_path, "mistag", embeddings=str(tmp_path / "f0.emb1"),
                      seeds=[0])
    with pytest.raises(ValidationError, match="declares fold 0"):
        run_experiment(cfg, run_root=tmp_path / "runs", log=None)


# ---------------------------------------------------------------------------
# Parallel execution


def test_parallel_jobs_match_sequential_artifacts(workspace, tmp_path):
    cfg = base_config(workspace["root"], "par", jobs=2)
    run_experiment(cfg, run_root=tmp_path / "runs", log=None)
    seq_dir = workspace["runs"] / "seq"
    par_dir = tmp_path / "runs" / "par"
    # config and manifest legitimately differ (run_id, jobs); all results match
    skip = {"config.json", "manifest.json"}
    seq = {p.name: file_digest(p) for p in seq_dir.iterdir() if p.name not in skip}
    par = {p.name: file_digest(p) for p in par_dir.iterdir() if p.name not in skip}
    assert par == seq


# ---------------------------------------------------------------------------
# Comparison


def test_compare_identical_runs_not_significant(workspace, tmp_path):
    run_experiment(base_config(workspace["root"], "twin"),
                   run_root=workspace["runs"], log=None)
    report = compare_runs("seq", "twin", run_root=workspace["runs"])
    assert report.ttest.p == pytest.approx(1.0)
    assert not report.dagger
    assert "seq" in report.table and "twin" in report.table
    assert "F1" in report.table


def test_compare_rejects_different_corpora(workspace, tmp_path):
    write_dataset(tmp_path, n_stories=5)
    run_experiment(base_config(tmp_path, "other"),
                   run_root=workspace["runs"], log=None)
    with pytest.raises(ValidationError, match="different corpora"):
        compare_runs("seq", "other", run_root=workspace["runs"])


def test_compare_unknown_run(workspace):
    with pytest.raises(MissingInputError):
        compare_runs("seq", "no_such_run", run_root=workspace["runs"])
