"""Metrics, significance testing, and stratified error analyses.

Precision, recall, and F1 treat the biased class as positive and are
reported as percentages (full precision internally; round only when
formatting).  The t-test is the two-sample Student test with pooled
variance (Welch available as an option), with the p-value computed
through the regularized incomplete beta function.
"""

from __future__ import annotations

import math
import string
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import betainc

from .corpus import SOURCES, Corpus, has_lexical_bias, is_biased, sentence_in_quote
from .errors import ValidationError

POSITIVE = 1  # class index of "biased"

# ---------------------------------------------------------------------------
# Precision / recall / F1


@dataclass(frozen=True)
class MetricReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def support(self) -> int:
        return self.tp + self.fn

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return {
            "precision": round(self.precision, 2),
            "recall": round(self.recall, 2),
            "f1": round(self.f1, 2),
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
        }


def _as_label_lists(golds_or_preds, preds):
    if preds is None:
        pset = golds_or_preds
        return list(pset.golds()), list(pset.preds())
    return list(golds_or_preds), list(preds)


def prf1(golds_or_preds, preds=None) -> MetricReport:
    """Percent precision/recall/F1 with biased (1) as the positive class.

    Accepts either a PredictionSet or two parallel label sequences.  Any
    zero denominator yields 0 for that metric rather than an error; an
    empty set is an error.
    """
    golds, preds = _as_label_lists(golds_or_preds, preds)
    if len(golds) != len(preds):
        raise ValidationError(
            f"gold and prediction lengths differ: {len(golds)} vs {len(preds)}"
        )
    if not golds:
        raise ValidationError("cannot score an empty prediction set")
    tp = fp = fn = tn = 0
    for g, p in zip(golds, preds):
        if g not in (0, 1) or p not in (0, 1):
            raise ValidationError("labels must be 0 or 1")
        if p == POSITIVE:
            if g == POSITIVE:
                tp += 1
            else:
                fp += 1
        else:
            if g == POSITIVE:
                fn += 1
            else:
                tn += 1
    precision = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    recall = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricReport(precision=precision, recall=recall, f1=f1, tp=tp, fp=fp, fn=fn, tn=tn)


# ---------------------------------------------------------------------------
# Aggregation across seeds


@dataclass(frozen=True)
class SeedAggregate:
    """Mean and sample standard deviation of each metric across seed runs.

    The std fields are None when aggregation was forced on a single run.
    """

    reports: tuple[MetricReport, ...]
    mean_precision: float
    mean_recall: float
    mean_f1: float
    std_precision: float | None
    std_recall: float | None
    std_f1: float | None

    @property
    def n_seeds(self) -> int:
        return len(self.reports)

    @property
    def f1_values(self) -> tuple[float, ...]:
        return tuple(r.f1 for r in self.reports)

    def to_dict(self) -> dict:
        def r2(x):
            return None if x is None else round(x, 2)

        return {
            "n_seeds": self.n_seeds,
            "precision": {"mean": r2(self.mean_precision), "std": r2(self.std_precision)},
            "recall": {"mean": r2(self.mean_recall), "std": r2(self.std_recall)},
            "f1": {"mean": r2(self.mean_f1), "std": r2(self.std_f1)},
            "f1_values": [round(v, 4) for v in self.f1_values],
        }


def aggregate_seeds(reports, allow_single: bool = False) -> SeedAggregate:
    """Aggregate per-seed MetricReports.

    Fewer than two reports is an error unless allow_single, in which case
    the stds are omitted and a warning is issued.
    """
    reports = tuple(reports)
    if not reports:
        raise ValidationError("no reports to aggregate")
    if len(reports) < 2 and not allow_single:
        raise ValidationError("need at least two seed runs to aggregate")
    single = len(reports) < 2
    if single:
        warnings.warn(
            "aggregating a single seed run; standard deviations omitted",
            RuntimeWarning,
            stacklevel=2,
        )

    def stats(values):
        arr = np.asarray(values, dtype=np.float64)
        if single:
            return float(arr.mean()), None
        return float(arr.mean()), float(arr.std(ddof=1))

    mp, sp = stats([r.precision for r in reports])
    mr, sr = stats([r.recall for r in reports])
    mf, sf = stats([r.f1 for r in reports])
    return SeedAggregate(
        reports=reports,
        mean_precision=mp,
        mean_recall=mr,
        mean_f1=mf,
        std_precision=sp,
        std_recall=sr,
        std_f1=sf,
    )


# ---------------------------------------------------------------------------
# Two-sample t-test


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p: float
    significant: bool
    alpha: float
    welch: bool = False

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "df": self.df,
            "p": self.p,
            "significant": self.significant,
            "alpha": self.alpha,
            "welch": self.welch,
        }


def independent_t_test(a, b, alpha: float = 0.05, welch: bool = False) -> TTestResult:
    """Two-sample t-test on independent samples (two-sided).

    Pooled-variance Student by default; ``welch=True`` drops the equal
    variance assumption.  If both samples are constant the test is
    degenerate: equal means give t=0, p=1, unequal means give p=0 with a
    warning since the statistic is unbounded.
    """
    a = np.asarray(list(a), dtype=np.float64)
    b = np.asarray(list(b), dtype=np.float64)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ValidationError("each sample needs at least two observations")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValidationError("samples must be finite")
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    mean_a, mean_b = float(a.mean()), float(b.mean())
    var_a = float(a.var(ddof=1))
    var_b = float(b.var(ddof=1))

    if var_a == 0.0 and var_b == 0.0:
        df = float(na + nb - 2)
        if mean_a == mean_b:
            return TTestResult(t=0.0, df=df, p=1.0, significant=False, alpha=alpha, welch=welch)
        warnings.warn(
            "both samples have zero variance with unequal means; "
            "the t statistic is unbounded, reporting p=0",
            RuntimeWarning,
            stacklevel=2,
        )
        t = math.inf if mean_a > mean_b else -math.inf
        return TTestResult(t=t, df=df, p=0.0, significant=True, alpha=alpha, welch=welch)

    if welch:
        se_sq = var_a / na + var_b / nb
        se = math.sqrt(se_sq)
        df = se_sq**2 / (
            (var_a / na) ** 2 / (na - 1) + (var_b / nb) ** 2 / (nb - 1)
        )
    else:
        df = float(na + nb - 2)
        pooled = ((na - 1) * var_a + (nb - 1) * var_b) / df
        se = math.sqrt(pooled * (1.0 / na + 1.0 / nb))

    t = (mean_a - mean_b) / se
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(t=t, df=df, p=p, significant=p < alpha, alpha=alpha, welch=welch)


# ---------------------------------------------------------------------------
# Sentence length binning


def tokenize(text: str) -> list[str]:
    """Whitespace tokens with surrounding punctuation stripped, lowercased."""
    out = []
    for raw in text.split():
        tok = raw.strip(string.punctuation).lower()
        if tok:
            out.append(tok)
    return out


def sentence_length(text: str) -> int:
    """Token count: whitespace split with bare punctuation tokens dropped."""
    return sum(1 for raw in text.split() if raw.strip(string.punctuation))


def quartile_cutoffs(lengths) -> tuple[int, int, int]:
    """Quartile cut points (Q1, Q2, Q3) using the inverted-CDF quantile."""
    arr = np.asarray(list(lengths), dtype=np.float64)
    if arr.size == 0:
        raise ValidationError("no lengths given")
    q = np.quantile(arr, [0.25, 0.5, 0.75], method="inverted_cdf")
    return int(q[0]), int(q[1]), int(q[2])


def length_quartiles(corpus: Corpus) -> tuple[int, int, int]:
    """Empirical quartile boundaries of per-sentence token counts."""
    return quartile_cutoffs(
        sentence_length(s.text) for _, _, s in corpus.iter_sentences()
    )


def assign_length_bin(token_count: int, cutoffs: tuple[int, int, int]) -> int:
    """Bin 1..4; a count tied with a boundary goes to the lower bin."""
    c1, c2, c3 = cutoffs
    if not c1 <= c2 <= c3:
        raise ValidationError(f"cutoffs must be nondecreasing, got {cutoffs}")
    if token_count <= c1:
        return 1
    if token_count <= c2:
        return 2
    if token_count <= c3:
        return 3
    return 4


# ---------------------------------------------------------------------------
# Subjectivity lexicon


@dataclass(frozen=True)
class ClueEntry:
    strength: str  # "strong" or "weak"
    stemmed: bool


@dataclass(frozen=True)
class SubjectivityLexicon:
    """Word-keyed subjectivity clues; words are lowercase-normalized."""

    entries: dict[str, ClueEntry] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def strength(self, word: str) -> str | None:
        entry = self.entries.get(word.lower())
        return entry.strength if entry else None

    @property
    def strong(self) -> frozenset[str]:
        return frozenset(w for w, e in self.entries.items() if e.strength == "strong")


_TYPE_TO_STRENGTH = {"strongsubj": "strong", "weaksubj": "weak"}


def load_mpqa_lexicon(path) -> SubjectivityLexicon:
    """Parse the MPQA subjectivity clues file (key=value fields per line).

    Malformed lines are skipped; one warning reports how many.  A word
    listed with conflicting strengths keeps the strong entry.  Stemmed
    entries are matched by surface form only (no stemmer is applied).
    """
    path = Path(path)
    entries: dict[str, ClueEntry] = {}
    skipped = 0
    with path.open("r", encoding="utf-8", errors="replace") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = {}
            for part in line.split():
                if "=" in part:
                    k, _, v = part.partition("=")
                    fields[k] = v
            word = fields.get("word1")
            strength = _TYPE_TO_STRENGTH.get(fields.get("type", ""))
            if word is None or strength is None:
                skipped += 1
                continue
            word = word.lower()
            entry = ClueEntry(strength=strength, stemmed=fields.get("stemmed1") == "y")
            prior = entries.get(word)
            if prior is None or (prior.strength == "weak" and strength == "strong"):
                entries[word] = entry
    if skipped:
        warnings.warn(
            f"{path}: skipped {skipped} malformed lexicon line(s)",
            RuntimeWarning,
            stacklevel=2,
        )
    if not entries:
        warnings.warn(f"{path}: lexicon is empty", RuntimeWarning, stacklevel=2)
    return SubjectivityLexicon(entries=entries)


def has_strong_subjective_clue(sentence, lexicon: SubjectivityLexicon) -> bool:
    """True iff any token of the sentence is a strong-subjectivity clue.

    Accepts a SentenceRecord or a raw string.
    """
    text = getattr(sentence, "text", sentence)
    return any(lexicon.strength(tok) == "strong" for tok in tokenize(text))


# ---------------------------------------------------------------------------
# Stratified analyses

STRATA_SCHEMES = ("length", "quote", "publisher", "leaning", "lexical", "subjectivity")


@dataclass(frozen=True)
class StratumReport:
    name: str
    size: int
    bias_rate: float  # percent of the stratum that is gold-biased
    metrics: MetricReport

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "size": self.size,
            "bias_rate": round(self.bias_rate, 2),
            "metrics": self.metrics.to_dict(),
        }


@dataclass(frozen=True)
class StratifiedReport:
    """Per-stratum scores under one partition scheme.

    For the quote scheme only gold-biased sentences are partitioned and
    recall is the meaningful metric (there are no gold negatives, so
    precision is vacuous); recall_only marks this for formatters.
    """

    scheme: str
    strata: tuple[StratumReport, ...]
    recall_only: bool

    def stratum(self, name: str) -> StratumReport:
        for s in self.strata:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.strata)

    @property
    def total(self) -> int:
        return sum(s.size for s in self.strata)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "recall_only": self.recall_only,
            "strata": [s.to_dict() for s in self.strata],
        }


def _sentence_attrs(corpus: Corpus):
    attrs = {}
    for story, article, sent in corpus.iter_sentences():
        attrs[sent.id] = (story, article, sent)
    return attrs


_LENGTH_ORDER = ("Q1", "Q2", "Q3", "Q4")
_LEANING_ORDER = ("right", "center", "left")


def _stratum_order(scheme: str, names) -> list[str]:
    fixed = {
        "length": _LENGTH_ORDER,
        "publisher": SOURCES,
        "leaning": _LEANING_ORDER,
        "quote": ("outside", "in_quote"),
        "lexical": ("lexical", "none"),
        "subjectivity": ("clue", "no_clue"),
    }[scheme]
    ordered = [n for n in fixed if n in names]
    ordered.extend(sorted(n for n in names if n not in fixed))
    return ordered


def stratify(
    preds,
    corpus: Corpus,
    scheme: str,
    lexicon: SubjectivityLexicon | None = None,
) -> StratifiedReport:
    """Split predictions into strata under a scheme and score each one.

    Publisher and leaning group by article metadata; length groups by
    corpus-wide token-count quartile; lexical and subjectivity group by
    whether the sentence carries a lexical span or a strong subjective
    clue.  The quote scheme keeps only gold-biased sentences and splits
    them by quote position.
    """
    if scheme not in STRATA_SCHEMES:
        raise ValidationError(
            f"unknown scheme {scheme!r}; expected one of {', '.join(STRATA_SCHEMES)}"
        )
    if scheme == "subjectivity" and lexicon is None:
        raise ValidationError("the subjectivity scheme needs a lexicon")
    attrs = _sentence_attrs(corpus)
    cutoffs = length_quartiles(corpus) if scheme == "length" else None

    buckets: dict[str, tuple[list[int], list[int]]] = {}

    def put(name: str, gold: int, pred: int) -> None:
        g, p = buckets.setdefault(name, ([], []))
        g.append(gold)
        p.append(pred)

    for entry in preds:
        if entry.id not in attrs:
            raise ValidationError(f"prediction id {entry.id!r} not in corpus")
        _, article, sent = attrs[entry.id]
        if scheme == "publisher":
            put(article.source, entry.gold, entry.pred)
        elif scheme == "leaning":
            put(article.leaning, entry.gold, entry.pred)
        elif scheme == "quote":
            if not is_biased(sent):
                continue
            put("in_quote" if sentence_in_quote(sent) else "outside", entry.gold, entry.pred)
        elif scheme == "length":
            put(f"Q{assign_length_bin(sentence_length(sent.text), cutoffs)}",
                entry.gold, entry.pred)
        elif scheme == "lexical":
            put("lexical" if has_lexical_bias(sent) else "none", entry.gold, entry.pred)
        else:
            put("clue" if has_strong_subjective_clue(sent, lexicon) else "no_clue",
                entry.gold, entry.pred)

    strata = []
    for name in _stratum_order(scheme, buckets):
        golds, hard = buckets[name]
        metrics = prf1(golds, hard)
        strata.append(
            StratumReport(
                name=name,
                size=len(golds),
                bias_rate=100.0 * sum(golds) / len(golds),
                metrics=metrics,
            )
        )
    return StratifiedReport(scheme=scheme, strata=tuple(strata), recall_only=scheme == "quote")
