"""Experiment splits: random sentence-level splits and story-grouped folds.

The story-grouped k-fold plan guarantees that a story (triple of articles on
one event) never straddles the train and non-train sections of any fold,
which is the leakage mode sentence-level splitting suffers from.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .errors import ConfigError, FormatError

# Fold-plan construction choices that are not forced by the data; recorded in
# the serialized plan so downstream reports can surface them.
PLAN_NOTES = {
    "balance": "folds balanced by story count, not sentence count",
    "dev_rule": "dev set of fold i is the test group of fold (i+1) mod k",
}


@dataclass(frozen=True)
class SentenceSplitPlan:
    train: frozenset[str]
    dev: frozenset[str]
    test: frozenset[str]
    seed: int


@dataclass(frozen=True)
class Fold:
    test_story_ids: frozenset[str]
    dev_story_ids: frozenset[str]
    train_story_ids: frozenset[str]


@dataclass(frozen=True)
class FoldPlan:
    k: int
    folds: tuple[Fold, ...]
    seed: int
    story_ids: frozenset[str]  # full universe the plan partitions


def make_sentence_split(corpus: Corpus, sizes: dict[str, int], seed: int) -> SentenceSplitPlan:
    """Uniform random assignment of sentences to train/dev/test.

    ``sizes`` must carry "train", "dev" and "test" counts summing to the
    corpus size.  Deterministic for a fixed (corpus, sizes, seed).
    """
    for key in ("train", "dev", "test"):
        if key not in sizes:
            raise ConfigError(f"sizes missing {key!r}")
    ids = corpus.sentence_ids()
    total = sizes["train"] + sizes["dev"] + sizes["test"]
    if total != len(ids):
        raise ConfigError(
            f"split sizes sum to {total} but corpus has {len(ids)} sentences"
        )
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n_train, n_dev = sizes["train"], sizes["dev"]
    return SentenceSplitPlan(
        train=frozenset(order[:n_train]),
        dev=frozenset(order[n_train:n_train + n_dev]),
        test=frozenset(order[n_train + n_dev:]),
        seed=seed,
    )


def make_story_folds(corpus: Corpus, k: int, seed: int) -> FoldPlan:
    """Partition stories into k groups and build rotating train/dev/test folds.

    Stories are shuffled by ``seed`` and split into k near-equal test groups
    (the first ``n % k`` groups get one extra story).  Fold i tests group i,
    uses group (i+1) mod k for development, and trains on the rest, so each
    story serves exactly once as test and once as dev.
    """
    stories = corpus.story_ids()
    n = len(stories)
    if k < 2:
        raise ConfigError("k must be at least 2 (the dev group rotates to the next fold)")
    if k > n:
        raise ConfigError(f"cannot build {k} folds from {n} stories")
    rng = np.random.default_rng(seed)
    order = [stories[i] for i in rng.permutation(n)]

    groups: list[list[str]] = []
    base, extra = divmod(n, k)
    pos = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        groups.append(order[pos:pos + size])
        pos += size

    folds = []
    for i in range(k):
        test = frozenset(groups[i])
        dev = frozenset(groups[(i + 1) % k])
        train = frozenset(order) - test - dev
        folds.append(Fold(test_story_ids=test, dev_story_ids=dev, train_story_ids=train))
    return FoldPlan(k=k, folds=tuple(folds), seed=seed, story_ids=frozenset(stories))


def verify_no_story_leakage(plan: FoldPlan) -> tuple[bool, list[tuple[str, int]]]:
    """Check the fold-plan invariants; return (ok, violations).

    Violations are (story_id, fold_index) pairs: a story appearing in more
    than one section of a fold, missing from a fold's partition, or not
    appearing in exactly one test group across the folds.
    """
    violations: list[tuple[str, int]] = []
    test_appearances: dict[str, list[int]] = {sid: [] for sid in plan.story_ids}

    for i, fold in enumerate(plan.folds):
        sections = (fold.train_story_ids, fold.dev_story_ids, fold.test_story_ids)
        for sid in plan.story_ids:
            hits = sum(1 for sec in sections if sid in sec)
            if hits != 1:
                violations.append((sid, i))
        for sid in fold.test_story_ids:
            if sid in test_appearances:
                test_appearances[sid].append(i)
        extraneous = set().union(*sections) - plan.story_ids
        violations.extend((sid, i) for sid in sorted(extraneous))

    for sid, where in test_appearances.items():
        if len(where) != 1:
            violations.extend((sid, i) for i in (where or [-1]))

    violations = sorted(set(violations), key=lambda v: (v[1], v[0]))
    return (not violations, violations)


# ---------------------------------------------------------------------------
# Serialization.  Output ids are sorted so identical inputs give
# byte-identical documents.


def _story_sentence_ids(corpus: Corpus, story_ids) -> list[str]:
    wanted = set(story_ids)
    out = []
    for st in corpus.stories:
        if st.story_id in wanted:
            for a in st.articles:
                out.extend(s.id for s in a.sentences)
    return sorted(out)


def sentence_split_to_dict(plan: SentenceSplitPlan) -> dict:
    return {
        "kind": "sentence_split",
        "seed": plan.seed,
        "train": sorted(plan.train),
        "dev": sorted(plan.dev),
        "test": sorted(plan.test),
    }


def fold_plan_to_dict(plan: FoldPlan, corpus: Corpus | None = None) -> dict:
    doc = {
        "kind": "story_folds",
        "k": plan.k,
        "seed": plan.seed,
        "story_ids": sorted(plan.story_ids),
        "notes": PLAN_NOTES,
        "folds": [],
    }
    for fold in plan.folds:
        entry = {
            "train_story_ids": sorted(fold.train_story_ids),
            "dev_story_ids": sorted(fold.dev_story_ids),
            "test_story_ids": sorted(fold.test_story_ids),
        }
        if corpus is not None:
            entry["train_sentence_ids"] = _story_sentence_ids(corpus, fold.train_story_ids)
            entry["dev_sentence_ids"] = _story_sentence_ids(corpus, fold.dev_story_ids)
            entry["test_sentence_ids"] = _story_sentence_ids(corpus, fold.test_story_ids)
        doc["folds"].append(entry)
    return doc


def fold_plan_from_dict(doc: dict) -> FoldPlan:
    if doc.get("kind") != "story_folds":
        raise ConfigError("not a story-fold plan document")
    folds = tuple(
        Fold(
            test_story_ids=frozenset(f["test_story_ids"]),
            dev_story_ids=frozenset(f["dev_story_ids"]),
            train_story_ids=frozenset(f["train_story_ids"]),
        )
        for f in doc["folds"]
    )
    if "story_ids" in doc:
        universe = frozenset(doc["story_ids"])
    elif folds:
        universe = frozenset().union(*(f.test_story_ids for f in folds))
    else:
        universe = frozenset()
    plan = FoldPlan(k=doc["k"], folds=folds, seed=doc["seed"], story_ids=universe)
    ok, violations = verify_no_story_leakage(plan)
    if not ok:
        raise FormatError(
            f"fold plan violates its invariants, e.g. (story, fold) {violations[:5]}"
        )
    return plan


def serialize_plan(plan, corpus: Corpus | None = None) -> str:
    if isinstance(plan, FoldPlan):
        doc = fold_plan_to_dict(plan, corpus)
    else:
        doc = sentence_split_to_dict(plan)
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def save_plan(plan, path, corpus: Corpus | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_plan(plan, corpus))


def load_fold_plan(path) -> FoldPlan:
    with open(path, encoding="utf-8") as fh:
        return fold_plan_from_dict(json.load(fh))
