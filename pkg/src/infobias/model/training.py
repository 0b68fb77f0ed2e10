"""Training loop, prediction, and the finite-difference gradient check."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..corpus import SOURCES
from ..errors import NumericalError, ValidationError
from ..evaluation import prf1
from .config import ContextVariant, ModelConfig, TrainConfig
from .data import CimItem, TagItem
from .network import (
    CimParameters,
    encode_document,
    forward,
    init_params,
    loss_and_grads,
    softmax,
    source_index,
    tag_window,
)
from .predictions import PredictionEntry, PredictionSet


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    dev_precision: float
    dev_recall: float
    dev_f1: float
    seconds: float


@dataclass
class TrainResult:
    params: CimParameters
    best_epoch: int
    best_dev_f1: float
    history: list[EpochStats] = field(default_factory=list)


class Adam:
    """Adam optimizer over a flat tensor dict."""

    def __init__(self, params: CimParameters, tcfg: TrainConfig):
        self.lr = tcfg.learning_rate
        self.beta1 = tcfg.beta1
        self.beta2 = tcfg.beta2
        self.eps = tcfg.adam_eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors.items()}

    def step(self, params: CimParameters, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for key, g in grads.items():
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params.tensors[key] -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def _clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm > 0.0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def story_locality_batches(items, batch_size: int, rng: np.random.Generator):
    """Shuffled batches that keep items of one context adjacent.

    Context groups are shuffled, items are shuffled inside each group, and
    the concatenation is cut into consecutive batches.  A batch therefore
    spans few distinct contexts and the shared-context loss encodes each of
    them once.
    """
    groups: dict[object, list] = {}
    for item in items:
        key = getattr(item, "context_key", None)
        groups.setdefault(key, []).append(item)
    keys = list(groups)
    order = rng.permutation(len(keys))
    flat = []
    for gi in order:
        members = groups[keys[gi]]
        for ii in rng.permutation(len(members)):
            flat.append(members[ii])
    return [flat[i:i + batch_size] for i in range(0, len(flat), batch_size)]


def predict(
    params: CimParameters, items, fold: int = 0, seed: int = 0
) -> PredictionSet:
    """Hard predictions with the tie at p_biased = 0.5 going to biased.

    Equivalent to calling forward() per item, but context documents shared
    through ``context_key`` are encoded only once.
    """
    cfg = params.config
    variant = cfg.variant.value
    W = params.tensors["cls.W"]
    b = params.tensors["cls.b"]
    ctx_vecs: dict[object, list[np.ndarray]] = {}
    out = PredictionSet()
    for item in items:
        pieces = [np.asarray(item.target, dtype=np.float64)]
        if cfg.num_docs:
            key = item.context_key
            if key not in ctx_vecs:
                ctx_vecs[key] = [
                    encode_document(params, doc, encoder=j)[0]
                    for j, doc in enumerate(item.context_docs)
                ]
            pieces.extend(ctx_vecs[key])
        if cfg.variant.is_star:
            pieces.append(params.tensors["src.emb"][source_index(item.source)])
        feature = np.concatenate(pieces) if len(pieces) > 1 else pieces[0]
        probs = softmax(W @ feature + b)
        p = float(probs[1])
        out.add(
            PredictionEntry(
                id=item.sentence_id,
                p_biased=p,
                pred=1 if p >= 0.5 else 0,
                gold=item.label,
                variant=variant,
                fold=fold,
                seed=seed,
            )
        )
    return out


def predict_tagger(
    params: CimParameters, tag_items, fold: int = 0, seed: int = 0
) -> PredictionSet:
    """Per-sentence predictions from windowed sequences.

    Only core positions are emitted; book-ends exist for context alone.
    Cores partition each article, so every sentence appears exactly once.
    """
    out = PredictionSet()
    variant = params.config.variant.value
    for item in tag_items:
        probs = tag_window(params, item.matrix)
        for t, scored in enumerate(item.core_mask):
            if not scored:
                continue
            p = float(probs[t, 1])
            out.add(
                PredictionEntry(
                    id=item.sentence_ids[t],
                    p_biased=p,
                    pred=1 if p >= 0.5 else 0,
                    gold=item.labels[t],
                    variant=variant,
                    fold=fold,
                    seed=seed,
                )
            )
    return out


def _dev_f1(params: CimParameters, dev_items, tagger: bool) -> tuple[float, float, float]:
    if not dev_items:
        return 0.0, 0.0, 0.0
    preds = predict_tagger(params, dev_items) if tagger else predict(params, dev_items)
    report = prf1(preds.golds(), preds.preds())
    return report.precision, report.recall, report.f1


def train(
    train_items,
    dev_items,
    cfg: ModelConfig,
    tcfg: TrainConfig,
    params: CimParameters | None = None,
    log=None,
) -> TrainResult:
    """Adam training with best-epoch selection on dev F1.

    Parameters are initialized from (cfg, tcfg.seed) unless given, so a
    fixed seed determines the whole run.  The returned parameters are a
    snapshot of the epoch with the highest dev F1 (earliest on ties).
    Raises NumericalError the moment a batch loss stops being finite.
    """
    if not train_items:
        raise ValidationError("no training items")
    if params is None:
        params = init_params(cfg, tcfg.seed)
    elif params.config != cfg:
        raise ValidationError("given parameters do not match the model config")
    tagger = cfg.variant is ContextVariant.WINDOW_TAGGER
    rng = np.random.default_rng(tcfg.seed)
    opt = Adam(params, tcfg)

    best = params.copy()
    best_f1 = -1.0
    best_epoch = -1
    history: list[EpochStats] = []

    for epoch in range(tcfg.epochs):
        started = time.perf_counter()
        batches = story_locality_batches(train_items, tcfg.batch_size, rng)
        total_loss = 0.0
        total_n = 0
        for batch in batches:
            loss, grads = loss_and_grads(
                params, batch, tcfg.class_weights, dropout=tcfg.dropout, rng=rng
            )
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}: {loss!r}"
                )
            if tcfg.grad_clip > 0.0:
                _clip_grads(grads, tcfg.grad_clip)
            opt.step(params, grads)
            total_loss += loss * len(batch)
            total_n += len(batch)

        p, r, f1 = _dev_f1(params, dev_items, tagger)
        if f1 > best_f1:
            best_f1 = f1
            best_epoch = epoch
            best = params.copy()
        stats = EpochStats(
            epoch=epoch,
            train_loss=total_loss / max(total_n, 1),
            dev_precision=p,
            dev_recall=r,
            dev_f1=f1,
            seconds=time.perf_counter() - started,
        )
        history.append(stats)
        if log is not None:
            log(stats)

    if best_epoch < 0:
        best = params.copy()
        best_epoch = tcfg.epochs - 1
        best_f1 = 0.0
    return TrainResult(params=best, best_epoch=best_epoch, best_dev_f1=best_f1, history=history)


# ---------------------------------------------------------------------------
# Gradient verification


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_err: float
    worst_key: str
    per_key: dict[str, float]
    checked: int


def _check_batch(cfg: ModelConfig, seed: int):
    """A small deterministic batch exercising every parameter tensor."""
    rng = np.random.default_rng(seed)
    d = cfg.input_dim
    if cfg.variant is ContextVariant.WINDOW_TAGGER:
        items = []
        for labels, mask in (((0, 1, 0), (False, True, True)), ((1, 0), (True, True))):
            items.append(
                TagItem(
                    matrix=rng.standard_normal((len(labels), d)),
                    labels=labels,
                    core_mask=mask,
                    sentence_ids=tuple(f"g{len(items)}.{t}" for t in range(len(labels))),
                )
            )
        return items
    docs = tuple(
        rng.standard_normal((2 + j % 2, d)) for j in range(cfg.num_docs)
    )
    items = []
    for i in range(4):
        items.append(
            CimItem(
                sentence_id=f"g{i}",
                target=rng.standard_normal(d),
                label=i % 2,
                context_docs=docs,
                context_key="g",
                source=SOURCES[i % len(SOURCES)],
                story_id="g",
            )
        )
    return items


def grad_check(
    cfg: ModelConfig,
    eps: float = 1e-5,
    seed: int = 0,
    items=None,
    params: CimParameters | None = None,
    max_entries_per_tensor: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    Parameters and a small batch are built deterministically from the
    config and seed unless supplied.  For each checked entry the relative
    error is |analytic - numeric| / max(|analytic| + |numeric|, 1e-6).
    With max_entries_per_tensor set, a random subset of each tensor is
    probed; otherwise every entry is.  Intended for small configs (a few
    thousand parameters); cost grows with two loss evaluations per entry.
    """
    if params is None:
        params = init_params(cfg, seed)
    if items is None:
        items = _check_batch(cfg, seed)
    loss, grads = loss_and_grads(params, items)
    if not np.isfinite(loss):
        raise NumericalError("loss is not finite at the check point")

    per_key: dict[str, float] = {}
    worst = 0.0
    worst_key = ""
    checked = 0
    for key in sorted(params.tensors):
        tensor = params.tensors[key]
        flat = tensor.reshape(-1)
        n = flat.size
        if max_entries_per_tensor is not None and n > max_entries_per_tensor:
            if rng is None:
                rng = np.random.default_rng(0)
            idxs = rng.choice(n, size=max_entries_per_tensor, replace=False)
        else:
            idxs = range(n)
        key_worst = 0.0
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_and_grads(params, items)[0]
            flat[i] = orig - eps
            down = loss_and_grads(params, items)[0]
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            analytic = grads[key].reshape(-1)[i]
            rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-6)
            key_worst = max(key_worst, rel)
            checked += 1
        per_key[key] = key_worst
        if key_worst > worst:
            worst = key_worst
            worst_key = key
    return GradCheckReport(
        max_rel_err=worst, worst_key=worst_key, per_key=per_key, checked=checked
    )
