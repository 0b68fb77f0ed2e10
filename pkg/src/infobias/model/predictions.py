"""Per-sentence prediction records with a JSONL round-trip.

One line per sentence: id, probability of the biased class, hard
prediction, gold label, and enough run metadata (variant, fold, seed) to
aggregate and compare runs later without consulting anything else.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import FormatError, ValidationError

_REQUIRED = ("id", "p_biased", "pred", "gold", "variant", "fold", "seed")


@dataclass(frozen=True)
class PredictionEntry:
    id: str
    p_biased: float
    pred: int
    gold: int
    variant: str
    fold: int
    seed: int

    def __post_init__(self):
        if not math.isfinite(self.p_biased) or not 0.0 <= self.p_biased <= 1.0:
            raise ValidationError(f"p_biased must lie in [0, 1], got {self.p_biased}")
        if self.pred not in (0, 1) or self.gold not in (0, 1):
            raise ValidationError("pred and gold must be 0 or 1")


@dataclass
class PredictionSet:
    entries: list[PredictionEntry] = field(default_factory=list)

    def add(self, entry: PredictionEntry) -> None:
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def golds(self) -> list[int]:
        return [e.gold for e in self.entries]

    def preds(self) -> list[int]:
        return [e.pred for e in self.entries]

    def by_id(self) -> dict[str, PredictionEntry]:
        out: dict[str, PredictionEntry] = {}
        for e in self.entries:
            if e.id in out:
                raise ValidationError(f"duplicate prediction for sentence {e.id!r}")
            out[e.id] = e
        return out

    def filter(self, keep) -> "PredictionSet":
        return PredictionSet([e for e in self.entries if keep(e)])


def save_predictions(preds: PredictionSet, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for e in preds.entries:
            fh.write(
                json.dumps(
                    {
                        "id": e.id,
                        "p_biased": e.p_biased,
                        "pred": e.pred,
                        "gold": e.gold,
                        "variant": e.variant,
                        "fold": e.fold,
                        "seed": e.seed,
                    },
                    sort_keys=True,
                )
            )
            fh.write("\n")


def load_predictions(path) -> PredictionSet:
    path = Path(path)
    entries: list[PredictionEntry] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: not valid JSON: {exc}") from None
            if not isinstance(obj, dict):
                raise FormatError(f"{path}:{lineno}: expected an object")
            missing = [k for k in _REQUIRED if k not in obj]
            if missing:
                raise FormatError(
                    f"{path}:{lineno}: missing field(s) {', '.join(missing)}"
                )
            try:
                entries.append(
                    PredictionEntry(
                        id=str(obj["id"]),
                        p_biased=float(obj["p_biased"]),
                        pred=int(obj["pred"]),
                        gold=int(obj["gold"]),
                        variant=str(obj["variant"]),
                        fold=int(obj["fold"]),
                        seed=int(obj["seed"]),
                    )
                )
            except (TypeError, ValueError, ValidationError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return PredictionSet(entries)
