"""Synthetic corpora, embeddings, and the context-signal experiment.

Two generators live here.  ``random_corpus`` produces structurally valid
corpora of arbitrary size for property tests and the ``synth`` CLI.
``make_context_experiment`` builds a corpus/embedding/fold bundle whose
labels are decidable only with cross-document context: every story has a
hidden tone carried in the lead sentence of each of its articles, and a
sentence is biased exactly when its own signal component exceeds that
tone.  A model reading only the target vector cannot separate the
mid-range sentences; a model that also encodes the documents can.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import LEANINGS, SOURCES, Corpus, parse_corpus_dict, save_corpus
from .embeddings import EmbeddingTable, write_embeddings
from .errors import ConfigError
from .splits import FoldPlan, make_story_folds, save_plan

_WORDS = (
    "the senator said policy critics warned budget vote city council measure "
    "passed review report sources plan leaders claim state response committee "
    "decision members public support issue agency federal local press group"
).split()


def _sentence_text(rng: np.random.Generator) -> str:
    n = int(rng.integers(4, 12))
    return " ".join(_WORDS[int(i)] for i in rng.integers(0, len(_WORDS), size=n))


def _spans_for(rng: np.random.Generator, text: str, biased: bool) -> list[dict]:
    spans = []
    if biased:
        end = int(min(len(text), 1 + rng.integers(1, max(2, len(text)))))
        spans.append(
            {
                "start": 0,
                "end": end,
                "kind": "informational",
                "in_quote": bool(rng.random() < 0.3),
            }
        )
    if rng.random() < 0.15:
        end = int(min(len(text), 1 + rng.integers(1, max(2, len(text)))))
        spans.append({"start": 0, "end": end, "kind": "lexical", "in_quote": False})
    return spans


def random_corpus(
    n_stories: int,
    seed: int,
    max_sentences: int = 8,
    empty_rate: float = 0.05,
    bias_rate: float = 0.2,
) -> Corpus:
    """A random but schema-valid corpus of full source triples.

    A small fraction of sentences is emitted with empty text to exercise
    the parser's drop-and-renumber path; every article keeps at least one
    real sentence.
    """
    if n_stories < 1:
        raise ConfigError("need at least one story")
    rng = np.random.default_rng(seed)
    stories = []
    for i in range(n_stories):
        story_id = f"{i:03d}"
        articles = []
        for source in SOURCES:
            n_sent = int(rng.integers(1, max_sentences + 1))
            empty = rng.random(n_sent) < empty_rate
            if empty.all():
                empty[int(rng.integers(0, n_sent))] = False
            sentences = []
            for idx in range(n_sent):
                if empty[idx]:
                    sentences.append(
                        {
                            "id": f"{story_id}{source.lower()}{idx:02d}",
                            "index": idx,
                            "text": "",
                            "spans": [],
                        }
                    )
                    continue
                text = _sentence_text(rng)
                biased = bool(rng.random() < bias_rate)
                sentences.append(
                    {
                        "id": f"{story_id}{source.lower()}{idx:02d}",
                        "index": idx,
                        "text": text,
                        "spans": _spans_for(rng, text, biased),
                    }
                )
            articles.append(
                {
                    "source": source,
                    "leaning": LEANINGS[int(rng.integers(0, len(LEANINGS)))],
                    "sentences": sentences,
                }
            )
        stories.append({"story_id": story_id, "articles": articles})
    return parse_corpus_dict(
        {"stories": stories}, provenance=f"synthetic:seed={seed}"
    )


def random_embeddings(corpus: Corpus, dim: int, seed: int) -> EmbeddingTable:
    """Standard-normal vectors for every sentence of the corpus."""
    rng = np.random.default_rng(seed)
    table = EmbeddingTable(dim=dim, encoder_tag=f"random:dim={dim},seed={seed}")
    for _, _, sent in corpus.iter_sentences():
        table.add(sent.id, rng.standard_normal(dim).astype(np.float32))
    return table


# ---------------------------------------------------------------------------
# Context-signal experiment


@dataclass(frozen=True)
class ContextExperiment:
    """Corpus, embeddings, fold plan, and bookkeeping for the tone task.

    ``context_dependent_ids`` holds the sentences whose label cannot be
    recovered from their own vector: non-lead sentences whose signal
    component lies strictly between the two possible tones.  ``tones``
    maps story id to its hidden tone.
    """

    corpus: Corpus
    table: EmbeddingTable
    folds: FoldPlan
    context_dependent_ids: frozenset[str]
    tones: dict[str, float]


def make_context_experiment(
    n_stories: int = 200,
    dim: int = 16,
    seed: int = 0,
    k: int = 10,
    tone: float = 0.6,
    margin: float = 0.05,
    min_sentences: int = 5,
    max_sentences: int = 7,
) -> ContextExperiment:
    """Build the cross-document-signal task.

    Per story, a tone of ±``tone`` is hidden in component 1 of each
    article's lead sentence.  Component 0 of every sentence is a signal u
    drawn uniformly from [-1, 1] (re-drawn while |u - tone| < ``margin``
    to keep the decision boundary clean); the sentence is biased iff
    u > tone.  All other components are noise, so only the lead carries
    the tone and only document context reveals it for mid-range targets.
    """
    if dim < 2:
        raise ConfigError("experiment vectors need at least 2 components")
    if not 0 < tone < 1:
        raise ConfigError("tone must lie in (0, 1)")
    rng = np.random.default_rng(seed)

    tone_signs = np.ones(n_stories)
    tone_signs[: n_stories // 2] = -1.0
    rng.shuffle(tone_signs)

    stories = []
    vectors: dict[str, np.ndarray] = {}
    dependent: set[str] = set()
    tones: dict[str, float] = {}
    for i in range(n_stories):
        story_id = f"{i:03d}"
        theta = float(tone_signs[i] * tone)
        tones[story_id] = theta
        articles = []
        for source in SOURCES:
            n_sent = int(rng.integers(min_sentences, max_sentences + 1))
            sentences = []
            for idx in range(n_sent):
                sid = f"{story_id}{source.lower()}{idx:02d}"
                u = float(rng.uniform(-1.0, 1.0))
                while abs(u - theta) < margin:
                    u = float(rng.uniform(-1.0, 1.0))
                vec = rng.normal(0.0, 0.1, size=dim)
                vec[0] = u
                vec[1] = theta if idx == 0 else float(rng.normal(0.0, 0.1))
                vectors[sid] = vec.astype(np.float32)
                biased = u > theta
                if idx > 0 and abs(u) < tone:
                    dependent.add(sid)
                text = _sentence_text(rng)
                sentences.append(
                    {
                        "id": sid,
                        "index": idx,
                        "text": text,
                        "spans": _spans_for(rng, text, biased),
                    }
                )
            articles.append(
                {
                    "source": source,
                    "leaning": LEANINGS[int(rng.integers(0, len(LEANINGS)))],
                    "sentences": sentences,
                }
            )
        stories.append({"story_id": story_id, "articles": articles})

    corpus = parse_corpus_dict(
        {"stories": stories}, provenance=f"context-experiment:seed={seed}"
    )
    table = EmbeddingTable(
        dim=dim, encoder_tag=f"context-experiment:dim={dim},seed={seed}"
    )
    for sid, vec in vectors.items():
        table.add(sid, vec)
    folds = make_story_folds(corpus, k=k, seed=seed)
    return ContextExperiment(
        corpus=corpus,
        table=table,
        folds=folds,
        context_dependent_ids=frozenset(dependent),
        tones=tones,
    )


def write_experiment(exp: ContextExperiment, out_dir) -> dict[str, str]:
    """Write the bundle as corpus.json, emb.emb1, folds.json, subset.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": str(out / "corpus.json"),
        "embeddings": str(out / "emb.emb1"),
        "folds": str(out / "folds.json"),
        "subset": str(out / "subset.json"),
    }
    save_corpus(exp.corpus, paths["corpus"])
    write_embeddings(exp.table, paths["embeddings"])
    save_plan(exp.folds, paths["folds"])
    with open(paths["subset"], "w", encoding="utf-8") as fh:
        json.dump(
            {
                "context_dependent_ids": sorted(exp.context_dependent_ids),
                "tones": {k: exp.tones[k] for k in sorted(exp.tones)},
            },
            fh,
            indent=1,
            sort_keys=True,
        )
        fh.write("\n")
    return paths
