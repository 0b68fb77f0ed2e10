"""Data model and parser for the annotated multi-source news corpus.

The canonical on-disk form is a single JSON document:

    {"stories": [{"story_id": ..., "articles": [
        {"source": "FOX"|"NYT"|"HPO", "leaning": "right"|"center"|"left",
         "sentences": [{"id", "index", "text",
                        "spans": [{"start", "end", "kind", "in_quote"}]}]}]}]}

Offsets are Unicode scalar-value indices into the sentence text.  A corpus is
immutable after parsing and safe for shared concurrent reads.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

from .errors import CorpusParseError, CorpusValidationError, MissingInputError

log = logging.getLogger(__name__)

SOURCES = ("FOX", "NYT", "HPO")
LEANINGS = ("right", "center", "left")
SPAN_KINDS = ("informational", "lexical")

BIASED = "biased"
NEUTRAL = "neutral"


@dataclass(frozen=True)
class Span:
    """A character-offset annotation span within one sentence."""

    start: int
    end: int
    kind: str  # "informational" or "lexical"
    in_quote: bool = False


@dataclass(frozen=True)
class SentenceRecord:
    id: str
    index: int  # 0-based position in the owning article
    text: str
    spans: tuple[Span, ...] = ()


@dataclass(frozen=True)
class ArticleRecord:
    source: str
    leaning: str
    story_id: str
    sentences: tuple[SentenceRecord, ...]


@dataclass(frozen=True)
class Story:
    story_id: str
    articles: tuple[ArticleRecord, ...]  # exactly one per source, in SOURCES order

    def article(self, source: str) -> ArticleRecord:
        for art in self.articles:
            if art.source == source:
                return art
        raise KeyError(source)


@dataclass(frozen=True)
class Corpus:
    stories: tuple[Story, ...]
    provenance: str = field(default="", compare=False)  # sha256 of the source file

    def iter_sentences(self):
        """Yield (story, article, sentence) in document order."""
        for story in self.stories:
            for article in story.articles:
                for sent in article.sentences:
                    yield story, article, sent

    def sentence_ids(self) -> list[str]:
        return [s.id for _, _, s in self.iter_sentences()]

    def sentence_count(self) -> int:
        return sum(len(a.sentences) for st in self.stories for a in st.articles)

    def story_ids(self) -> list[str]:
        return [st.story_id for st in self.stories]


def sentence_label(sent: SentenceRecord) -> str:
    """A sentence is biased iff it carries at least one informational span."""
    for span in sent.spans:
        if span.kind == "informational":
            return BIASED
    return NEUTRAL


def is_biased(sent: SentenceRecord) -> bool:
    return sentence_label(sent) == BIASED


def label_index(sent: SentenceRecord) -> int:
    """Integer class index: 0 for neutral, 1 for biased."""
    return int(is_biased(sent))


def sentence_in_quote(sent: SentenceRecord) -> bool:
    """Quote membership: any informational span flagged in_quote."""
    return any(sp.kind == "informational" and sp.in_quote for sp in sent.spans)


def has_lexical_bias(sent: SentenceRecord) -> bool:
    return any(sp.kind == "lexical" for sp in sent.spans)


def sentence_map(corpus: Corpus) -> dict[str, SentenceRecord]:
    return {s.id: s for _, _, s in corpus.iter_sentences()}


# ---------------------------------------------------------------------------
# Parsing


def _expect(cond: bool, loc: str, msg: str) -> None:
    if not cond:
        raise CorpusParseError(f"{loc}: {msg}")


def _parse_span(obj, loc: str, text_len: int) -> Span:
    _expect(isinstance(obj, dict), loc, "span must be an object")
    for key in ("start", "end", "kind"):
        _expect(key in obj, loc, f"span missing field {key!r}")
    start, end, kind = obj["start"], obj["end"], obj["kind"]
    _expect(isinstance(start, int) and isinstance(end, int), loc, "span offsets must be integers")
    _expect(kind in SPAN_KINDS, loc, f"unknown span kind {kind!r}")
    in_quote = obj.get("in_quote", False)
    _expect(isinstance(in_quote, bool), loc, "in_quote must be a boolean")
    if not (0 <= start < end <= text_len):
        raise CorpusValidationError(
            f"{loc}: span offsets [{start}, {end}) out of range for sentence of length {text_len}"
        )
    return Span(start=start, end=end, kind=kind, in_quote=in_quote)


def _parse_sentence(obj, loc: str) -> SentenceRecord:
    _expect(isinstance(obj, dict), loc, "sentence must be an object")
    for key in ("id", "index", "text"):
        _expect(key in obj, loc, f"sentence missing field {key!r}")
    sid, index, text = obj["id"], obj["index"], obj["text"]
    _expect(isinstance(sid, str) and sid != "", loc, "sentence id must be a non-empty string")
    _expect(isinstance(index, int) and index >= 0, loc, "sentence index must be a non-negative integer")
    _expect(isinstance(text, str), loc, "sentence text must be a string")
    spans = obj.get("spans", [])
    _expect(isinstance(spans, list), loc, "spans must be a list")
    parsed = tuple(_parse_span(sp, f"{loc}, span {k}", len(text)) for k, sp in enumerate(spans))
    return SentenceRecord(id=sid, index=index, text=text, spans=parsed)


def _parse_article(obj, story_id: str, loc: str, dropped: list[str]) -> ArticleRecord:
    _expect(isinstance(obj, dict), loc, "article must be an object")
    for key in ("source", "leaning", "sentences"):
        _expect(key in obj, loc, f"article missing field {key!r}")
    source, leaning = obj["source"], obj["leaning"]
    _expect(source in SOURCES, loc, f"unknown source {source!r}")
    _expect(leaning in LEANINGS, loc, f"unknown leaning {leaning!r}")
    raw = obj["sentences"]
    _expect(isinstance(raw, list), loc, "sentences must be a list")
    sentences = [_parse_sentence(s, f"{loc}, sentence {k}") for k, s in enumerate(raw)]

    # Contiguity is validated on the raw input, before empty-sentence removal.
    indices = [s.index for s in sentences]
    if indices != list(range(len(sentences))):
        raise CorpusValidationError(
            f"{loc}: sentence indices {indices} are not contiguous 0..{len(sentences) - 1}"
        )

    kept = []
    for sent in sentences:
        if sent.text.strip() == "":
            dropped.append(sent.id)
        else:
            kept.append(sent)
    # Re-number so indices stay contiguous after removal; ids keep their
    # original form.
    renumbered = tuple(
        SentenceRecord(id=s.id, index=k, text=s.text, spans=s.spans) for k, s in enumerate(kept)
    )
    return ArticleRecord(source=source, leaning=leaning, story_id=story_id, sentences=renumbered)


def _parse_story(obj, loc: str, dropped: list[str]) -> Story:
    _expect(isinstance(obj, dict), loc, "story must be an object")
    _expect("story_id" in obj and "articles" in obj, loc, "story missing story_id/articles")
    story_id = obj["story_id"]
    _expect(isinstance(story_id, str) and story_id != "", loc, "story_id must be a non-empty string")
    raw = obj["articles"]
    _expect(isinstance(raw, list), loc, "articles must be a list")
    articles = [
        _parse_article(a, story_id, f"{loc}, article {k}", dropped) for k, a in enumerate(raw)
    ]
    seen = [a.source for a in articles]
    if sorted(seen) != sorted(SOURCES):
        raise CorpusValidationError(
            f"{loc}: story {story_id!r} must contain exactly one article per source "
            f"{list(SOURCES)}, got {seen}"
        )
    ordered = tuple(sorted(articles, key=lambda a: SOURCES.index(a.source)))
    return Story(story_id=story_id, articles=ordered)


def parse_corpus_dict(doc, provenance: str = "") -> Corpus:
    """Parse an already-loaded JSON document into a validated Corpus."""
    _expect(isinstance(doc, dict), "document", "top level must be an object")
    _expect("stories" in doc and isinstance(doc["stories"], list), "document", "missing stories list")
    dropped: list[str] = []
    stories = tuple(
        _parse_story(st, f"story {k}", dropped) for k, st in enumerate(doc["stories"])
    )

    story_ids = [st.story_id for st in stories]
    if len(set(story_ids)) != len(story_ids):
        dupes = sorted({sid for sid in story_ids if story_ids.count(sid) > 1})
        raise CorpusValidationError(f"duplicate story ids: {dupes}")

    corpus = Corpus(stories=stories, provenance=provenance)
    ids = corpus.sentence_ids()
    if len(set(ids)) != len(ids):
        seen: set[str] = set()
        dupes = sorted({i for i in ids if i in seen or seen.add(i)})
        raise CorpusValidationError(f"duplicate sentence ids: {dupes}")

    if dropped:
        # Removed sentences cannot carry spans (span offsets require non-empty
        # text), so they are all neutral by construction.
        log.info(
            "dropped %d empty sentence(s) during parse (all neutral): %s",
            len(dropped), ", ".join(dropped),
        )
    return corpus


def parse_corpus(path) -> Corpus:
    """Read, validate and clean a corpus file in the canonical JSON schema."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError as exc:
        raise MissingInputError(f"corpus file not found: {path}") from exc
    digest = hashlib.sha256(raw).hexdigest()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorpusParseError(f"{path}: not valid UTF-8 JSON: {exc}") from exc
    return parse_corpus_dict(doc, provenance=digest)


# ---------------------------------------------------------------------------
# Serialization


def corpus_to_dict(corpus: Corpus) -> dict:
    return {
        "stories": [
            {
                "story_id": st.story_id,
                "articles": [
                    {
                        "source": a.source,
                        "leaning": a.leaning,
                        "sentences": [
                            {
                                "id": s.id,
                                "index": s.index,
                                "text": s.text,
                                "spans": [
                                    {
                                        "start": sp.start,
                                        "end": sp.end,
                                        "kind": sp.kind,
                                        "in_quote": sp.in_quote,
                                    }
                                    for sp in s.spans
                                ],
                            }
                            for s in a.sentences
                        ],
                    }
                    for a in st.articles
                ],
            }
            for st in corpus.stories
        ]
    }


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(corpus_to_dict(corpus), fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def convert_basil_release(source_dir, out_path) -> None:
    """Convert the corpus's native release layout into the canonical schema.

    Stub contract: given the directory of the original annotated release,
    emit one canonical JSON document at ``out_path``.  The native release is
    licensed separately and not bundled here; supply your own copy and
    implement the mapping for its file layout.
    """
    raise NotImplementedError(
        "convert_basil_release is a stub: obtain the annotated corpus release "
        "and map it onto the canonical schema documented in this module"
    )


# ---------------------------------------------------------------------------
# Statistics


@dataclass(frozen=True)
class CorpusStats:
    total_sentences: int
    biased_sentences: int
    sentences_by_source: dict[str, int]
    sentences_by_leaning: dict[str, int]
    articles_by_source_leaning: dict[str, dict[str, int]]
    biased_in_quote: int
    biased_outside_quote: int

    @property
    def bias_rate(self) -> float:
        if self.total_sentences == 0:
            return 0.0
        return 100.0 * self.biased_sentences / self.total_sentences


def corpus_stats(corpus: Corpus) -> CorpusStats:
    by_source = {src: 0 for src in SOURCES}
    by_leaning = {ln: 0 for ln in LEANINGS}
    articles = {src: {ln: 0 for ln in LEANINGS} for src in SOURCES}
    total = biased = in_quote = outside = 0
    for _, article, sent in corpus.iter_sentences():
        total += 1
        by_source[article.source] += 1
        by_leaning[article.leaning] += 1
        if is_biased(sent):
            biased += 1
            if sentence_in_quote(sent):
                in_quote += 1
            else:
                outside += 1
    for st in corpus.stories:
        for a in st.articles:
            articles[a.source][a.leaning] += 1
    return CorpusStats(
        total_sentences=total,
        biased_sentences=biased,
        sentences_by_source=by_source,
        sentences_by_leaning=by_leaning,
        articles_by_source_leaning=articles,
        biased_in_quote=in_quote,
        biased_outside_quote=outside,
    )
