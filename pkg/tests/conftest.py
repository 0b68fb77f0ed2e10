import json

import numpy as np
import pytest

from infobias.corpus import parse_corpus_dict
from infobias.embeddings import EmbeddingTable

SOURCES = ("FOX", "NYT", "HPO")
LEANINGS = {"FOX": "right", "NYT": "center", "HPO": "left"}


def make_sentence(sid, index, text="plain words here", spans=()):
    return {"id": sid, "index": index, "text": text, "spans": list(spans)}


def info_span(start=0, end=5, in_quote=False):
    return {"start": start, "end": end, "kind": "informational", "in_quote": in_quote}


def lex_span(start=0, end=5):
    return {"start": start, "end": end, "kind": "lexical", "in_quote": False}


def make_story(story_id, n_sentences=2, biased_idx=()):
    """One story with identical article shapes across the three sources."""
    articles = []
    for src in SOURCES:
        sents = []
        for i in range(n_sentences):
            spans = [info_span()] if i in biased_idx else []
            sents.append(
                make_sentence(f"{story_id}{src.lower()}{i:02d}", i, spans=spans)
            )
        articles.append(
            {
                "source": src,
                "leaning": LEANINGS[src],
                "sentences": sents,
            }
        )
    return {"story_id": story_id, "articles": articles}


def make_corpus_doc(n_stories=2, n_sentences=2, biased_idx=(0,)):
    return {
        "stories": [
            make_story(f"{k:02d}", n_sentences, biased_idx) for k in range(n_stories)
        ]
    }


@pytest.fixture
def tiny_corpus():
    """Two stories, three 2-sentence articles each; first sentence biased."""
    return parse_corpus_dict(make_corpus_doc(), provenance="test")


@pytest.fixture
def tiny_corpus_path(tmp_path):
    path = tmp_path / "corpus.json"
    path.write_text(json.dumps(make_corpus_doc()), encoding="utf-8")
    return path


def fill_table(corpus, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    table = EmbeddingTable(dim=dim)
    for sid in corpus.sentence_ids():
        table.add(sid, rng.standard_normal(dim).astype(np.float32))
    return table
