"""Turning a corpus, an embedding table, and a fold plan into model inputs.

Every classification item carries the target sentence vector plus the
context documents its variant needs.  Context documents are matrices of
the article's sentence vectors in article order; for event-level variants
there are three, fixed to (FOX, NYT, HPO) so encoder j always sees the
same outlet.  Items of the same article or story share context arrays and
a ``context_key``, which the loss uses to encode each context only once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import SOURCES, Corpus, label_index
from ..embeddings import EmbeddingTable
from ..errors import MissingInputError, ValidationError
from ..windowing import WindowSequence, segment_article
from .config import ContextVariant, ModelConfig


@dataclass(frozen=True, eq=False)
class CimItem:
    sentence_id: str
    target: np.ndarray
    label: int
    context_docs: tuple[np.ndarray, ...]
    context_key: str
    source: str
    story_id: str


@dataclass(frozen=True, eq=False)
class TagItem:
    """One windowed sequence: a matrix plus per-position labels and ids."""

    matrix: np.ndarray
    labels: tuple[int, ...]
    core_mask: tuple[bool, ...]
    sentence_ids: tuple[str, ...]
    sequence: WindowSequence | None = None


def _require_vectors(table: EmbeddingTable, ids: list[str]) -> None:
    missing = sorted(i for i in ids if i not in table)
    if missing:
        shown = ", ".join(missing[:10])
        more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        raise MissingInputError(
            f"{len(missing)} sentence id(s) have no embedding: {shown}{more}"
        )


def _article_matrix(table: EmbeddingTable, article) -> np.ndarray:
    return np.stack([table.vector64(s.id) for s in article.sentences])


def build_items(
    corpus: Corpus,
    table: EmbeddingTable,
    cfg: ModelConfig,
    story_ids=None,
) -> list[CimItem]:
    """Classification items for every sentence of the selected stories.

    Raises MissingInputError listing absent embedding ids before building
    anything, so a partial table fails loudly rather than silently shrinking
    the dataset.
    """
    if cfg.variant is ContextVariant.WINDOW_TAGGER:
        raise ValidationError("window_tagger uses build_tag_items")
    chosen = set(story_ids) if story_ids is not None else None
    stories = [s for s in corpus.stories if chosen is None or s.story_id in chosen]
    if chosen is not None:
        known = {s.story_id for s in corpus.stories}
        unknown = sorted(chosen - known)
        if unknown:
            raise ValidationError(f"unknown story ids in selection: {', '.join(unknown)}")

    needed: list[str] = []
    for story in stories:
        for article in story.articles:
            needed.extend(s.id for s in article.sentences)
    _require_vectors(table, needed)

    items: list[CimItem] = []
    for story in stories:
        event_docs = None
        if cfg.num_docs == 3:
            event_docs = tuple(
                _article_matrix(table, story.article(src)) for src in SOURCES
            )
        for article in story.articles:
            if cfg.num_docs == 1:
                docs = (_article_matrix(table, article),)
                key = f"{story.story_id}/{article.source}"
            elif cfg.num_docs == 3:
                docs = event_docs
                key = story.story_id
            else:
                docs = ()
                key = f"{story.story_id}/{article.source}"
            for sent in article.sentences:
                items.append(
                    CimItem(
                        sentence_id=sent.id,
                        target=table.vector64(sent.id),
                        label=label_index(sent),
                        context_docs=docs,
                        context_key=key,
                        source=article.source,
                        story_id=story.story_id,
                    )
                )
    return items


def build_tag_items(
    corpus: Corpus,
    table: EmbeddingTable,
    max_core: int,
    story_ids=None,
) -> list[TagItem]:
    """Windowed sequences for the tagger; book-end positions are unscored."""
    chosen = set(story_ids) if story_ids is not None else None
    stories = [s for s in corpus.stories if chosen is None or s.story_id in chosen]

    needed: list[str] = []
    for story in stories:
        for article in story.articles:
            needed.extend(s.id for s in article.sentences)
    _require_vectors(table, needed)

    items: list[TagItem] = []
    for story in stories:
        for article in story.articles:
            sents = article.sentences
            ref = f"{story.story_id}/{article.source}"
            for seq in segment_article(len(sents), max_core, article_ref=ref):
                idxs = seq.indices()
                matrix = np.stack([table.vector64(sents[i].id) for i in idxs])
                items.append(
                    TagItem(
                        matrix=matrix,
                        labels=tuple(label_index(sents[i]) for i in idxs),
                        core_mask=tuple(not p.is_bookend for p in seq.positions),
                        sentence_ids=tuple(sents[i].id for i in idxs),
                        sequence=seq,
                    )
                )
    return items


def items_by_story(items: list[CimItem]) -> dict[str, list[CimItem]]:
    out: dict[str, list[CimItem]] = {}
    for item in items:
        out.setdefault(item.story_id, []).append(item)
    return out
