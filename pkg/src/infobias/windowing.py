"""Segment articles into capped-length sentence sequences with book-ends.

An article of n sentences is cut into ceil(n/L) consecutive cores of at most
L sentences.  Every sequence except the first is prefixed with the previous
core's last sentence, and every sequence except the last is suffixed with the
next core's first sentence.  Book-end positions duplicate a neighbor core's
edge sentence to give the boundary sentences two-sided context; they are
never scored, and the outermost edges receive no padding.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class WindowPosition:
    index: int  # sentence index within the article
    is_bookend: bool


@dataclass(frozen=True)
class WindowSequence:
    article_ref: str | None
    positions: tuple[WindowPosition, ...]

    def core_indices(self) -> list[int]:
        return [p.index for p in self.positions if not p.is_bookend]

    def indices(self) -> list[int]:
        return [p.index for p in self.positions]

    def __len__(self) -> int:
        return len(self.positions)


def segment_article(n: int, max_core: int, article_ref: str | None = None) -> list[WindowSequence]:
    """Split sentence indices 0..n-1 into book-ended sequences.

    ``max_core`` is the cap on scored sentences per sequence.
    """
    if n < 1:
        raise ValidationError(f"cannot segment an article of {n} sentences")
    if max_core < 1:
        raise ValidationError(f"max core length must be positive, got {max_core}")

    cores = [list(range(i, min(i + max_core, n))) for i in range(0, n, max_core)]
    sequences = []
    for k, core in enumerate(cores):
        positions = []
        if k > 0:
            positions.append(WindowPosition(index=cores[k - 1][-1], is_bookend=True))
        positions.extend(WindowPosition(index=i, is_bookend=False) for i in core)
        if k + 1 < len(cores):
            positions.append(WindowPosition(index=cores[k + 1][0], is_bookend=True))
        sequences.append(WindowSequence(article_ref=article_ref, positions=tuple(positions)))
    return sequences


def reassemble_predictions(sequences: list[WindowSequence], predictions) -> list:
    """Map per-position predictions back to one prediction per sentence.

    ``predictions`` is one list per sequence, aligned with its positions.
    Book-end positions are discarded; every sentence must surface exactly
    once as a core position.
    """
    if len(predictions) != len(sequences):
        raise ValidationError(
            f"got {len(predictions)} prediction rows for {len(sequences)} sequences"
        )
    by_sentence: dict[int, object] = {}
    for seq, preds in zip(sequences, predictions):
        if len(preds) != len(seq.positions):
            raise ValidationError(
                f"sequence has {len(seq.positions)} positions but {len(preds)} predictions"
            )
        for pos, pred in zip(seq.positions, preds):
            if pos.is_bookend:
                continue
            if pos.index in by_sentence:
                raise AssertionError(
                    f"sentence index {pos.index} appears in more than one core"
                )
            by_sentence[pos.index] = pred

    n = len(by_sentence)
    missing = [i for i in range(n) if i not in by_sentence]
    if missing or (by_sentence and max(by_sentence) != n - 1):
        raise AssertionError(f"core positions do not partition the article: {sorted(by_sentence)}")
    return [by_sentence[i] for i in range(n)]
