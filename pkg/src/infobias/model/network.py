"""Parameter container, initialization, and the classification network.

A context-inclusive model concatenates the target sentence vector with one
context vector per document (final forward and final backward hidden state
of that document's top BiLSTM layer) and, for star variants, a learned
embedding of the article's news source, then applies a linear layer and a
softmax.  The window tagger instead runs one BiLSTM over a sentence sequence
and classifies every position from its 2H-wide state with a shared linear
layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..corpus import SOURCES
from ..errors import ConfigError, ValidationError
from .config import ContextVariant, ModelConfig
from .lstm import bilstm_backward, bilstm_forward, bilstm_key


@dataclass
class CimParameters:
    config: ModelConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "CimParameters":
        return CimParameters(
            config=self.config,
            tensors={k: v.copy() for k, v in self.tensors.items()},
        )

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def keys(self) -> list[str]:
        return sorted(self.tensors)

    def num_params(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, CimParameters):
            return NotImplemented
        return (
            self.config == other.config
            and set(self.tensors) == set(other.tensors)
            and all(np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors)
        )


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Declared tensor shapes for a configuration, keyed as stored."""
    shapes: dict[str, tuple[int, ...]] = {}
    H = cfg.hidden
    for enc in range(cfg.num_encoders):
        for layer in range(cfg.layers):
            d_in = cfg.input_dim if layer == 0 else 2 * H
            for direction in ("fw", "bw"):
                shapes[bilstm_key(f"enc{enc}", layer, direction, "W")] = (4 * H, d_in)
                shapes[bilstm_key(f"enc{enc}", layer, direction, "U")] = (4 * H, H)
                shapes[bilstm_key(f"enc{enc}", layer, direction, "b")] = (4 * H,)
    if cfg.source_dim > 0:
        shapes["src.emb"] = (len(SOURCES), cfg.source_dim)
    shapes["cls.W"] = (cfg.num_classes, cfg.feature_width)
    shapes["cls.b"] = (cfg.num_classes,)
    return shapes


def _orthogonal_block(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    # Fix signs so the factorization (and hence the init) is unique.
    return q * np.sign(np.diag(r))


def init_params(cfg: ModelConfig, seed: int) -> CimParameters:
    """Deterministic initialization.

    Recurrent matrices get per-gate orthogonal blocks, input matrices are
    uniform in +-sqrt(1/hidden), biases start at zero, the classifier is
    uniform in +-sqrt(1/feature_width), and source embeddings are uniform
    in +-sqrt(1/source_dim).
    """
    rng = np.random.default_rng(seed)
    H = cfg.hidden
    in_scale = np.sqrt(1.0 / H)
    tensors: dict[str, np.ndarray] = {}
    for key, shape in sorted(parameter_shapes(cfg).items()):
        if key.endswith(".U"):
            blocks = [_orthogonal_block(rng, H) for _ in range(4)]
            tensors[key] = np.concatenate(blocks, axis=0)
        elif key.endswith(".W"):
            tensors[key] = rng.uniform(-in_scale, in_scale, size=shape)
        elif key.endswith(".b"):
            tensors[key] = np.zeros(shape)
        elif key == "src.emb":
            scale = np.sqrt(1.0 / cfg.source_dim)
            tensors[key] = rng.uniform(-scale, scale, size=shape)
        elif key == "cls.W":
            scale = np.sqrt(1.0 / cfg.feature_width)
            tensors[key] = rng.uniform(-scale, scale, size=shape)
        elif key == "cls.b":
            tensors[key] = np.zeros(shape)
        else:  # pragma: no cover
            raise AssertionError(f"unhandled parameter key {key}")
    assert tensors["cls.W"].shape[1] == cfg.feature_width
    return CimParameters(config=cfg, tensors=tensors)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_doc(cfg: ModelConfig, doc: np.ndarray) -> np.ndarray:
    doc = np.asarray(doc, dtype=np.float64)
    if doc.ndim != 2 or doc.shape[0] == 0:
        raise ValidationError("context document must be a non-empty (T, input_dim) array")
    if doc.shape[1] != cfg.input_dim:
        raise ValidationError(
            f"document vectors have dim {doc.shape[1]}, model expects {cfg.input_dim}"
        )
    return doc


def encode_document(params: CimParameters, doc, encoder: int = 0):
    """Encode one document (ordered sentence vectors) into a 2H context vector.

    Returns (context_vector, caches); callers that only want the vector can
    drop the caches, the training path reuses them for backprop.
    """
    cfg = params.config
    doc = _check_doc(cfg, doc)
    out, caches = bilstm_forward(params.tensors, f"enc{encoder}", cfg.layers, doc)
    H = cfg.hidden
    ctx = np.concatenate([out[-1, :H], out[0, H:]])
    return ctx, caches


def source_index(source) -> int:
    if isinstance(source, int):
        if not 0 <= source < len(SOURCES):
            raise ValidationError(f"source index {source} out of range")
        return source
    try:
        return SOURCES.index(source)
    except ValueError:
        raise ValidationError(f"unknown source {source!r}") from None


def build_feature(params: CimParameters, target, contexts, source=None):
    """Assemble the classifier input vector; returns (feature, ctx_caches)."""
    cfg = params.config
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (cfg.input_dim,):
        raise ValidationError(
            f"target vector has shape {target.shape}, expected ({cfg.input_dim},)"
        )
    if len(contexts) != cfg.num_docs:
        raise ValidationError(
            f"variant {cfg.variant.value} needs {cfg.num_docs} context document(s), "
            f"got {len(contexts)}"
        )
    if cfg.variant.is_star and source is None:
        raise ValidationError("star variants need the article source")
    if not cfg.variant.is_star and source is not None:
        raise ValidationError("source feature given but variant is not a star variant")

    pieces = [target]
    caches = []
    for j, doc in enumerate(contexts):
        ctx, cache = encode_document(params, doc, encoder=j)
        pieces.append(ctx)
        caches.append(cache)
    if cfg.variant.is_star:
        pieces.append(params.tensors["src.emb"][source_index(source)])
    feature = np.concatenate(pieces) if len(pieces) > 1 else pieces[0]
    assert feature.shape == (cfg.feature_width,)
    return feature, caches


def forward(params: CimParameters, target, contexts, source=None) -> np.ndarray:
    """Class probabilities (neutral, biased) for one sentence."""
    feature, _ = build_feature(params, target, contexts, source)
    logits = params.tensors["cls.W"] @ feature + params.tensors["cls.b"]
    return softmax(logits)


def tag_window(params: CimParameters, seq) -> np.ndarray:
    """Per-position class probabilities for a window sequence (T, input_dim)."""
    cfg = params.config
    if cfg.variant is not ContextVariant.WINDOW_TAGGER:
        raise ConfigError("tag_window requires the window_tagger variant")
    seq = _check_doc(cfg, seq)
    out, _ = bilstm_forward(params.tensors, "enc0", cfg.layers, seq)
    logits = out @ params.tensors["cls.W"].T + params.tensors["cls.b"]
    return softmax(logits)


# ---------------------------------------------------------------------------
# Loss and analytic gradients


def loss_and_grads(
    params: CimParameters,
    items,
    class_weights: tuple[float, float] = (1.0, 1.0),
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over a batch plus exact parameter gradients.

    Items sharing a ``context_key`` also share their context documents, so
    each distinct context is encoded once and receives the summed gradient
    of all its items.  With ``dropout`` > 0 an inverted-dropout mask is
    applied to the classifier input (training-time only; pass the training
    rng for determinism).
    """
    cfg = params.config
    if dropout > 0.0 and rng is None:
        rng = np.random.default_rng(0)
    if cfg.variant is ContextVariant.WINDOW_TAGGER:
        return _tagger_loss_and_grads(params, items, class_weights, dropout, rng)

    n = len(items)
    if n == 0:
        raise ValidationError("empty batch")
    H = cfg.hidden
    W = params.tensors["cls.W"]
    grads = params.zero_grads()

    # Encode each distinct context once.
    ctx_cache: dict[object, tuple[list[np.ndarray], list]] = {}
    for item in items:
        key = item.context_key
        if cfg.num_docs and key not in ctx_cache:
            vecs, caches = [], []
            for j, doc in enumerate(item.context_docs):
                ctx, cache = encode_document(params, doc, encoder=j)
                vecs.append(ctx)
                caches.append(cache)
            ctx_cache[key] = (vecs, caches)

    total = 0.0
    d_ctx_acc: dict[object, list[np.ndarray]] = {}
    for item in items:
        pieces = [np.asarray(item.target, dtype=np.float64)]
        if cfg.num_docs:
            pieces.extend(ctx_cache[item.context_key][0])
        if cfg.variant.is_star:
            src = source_index(item.source)
            pieces.append(params.tensors["src.emb"][src])
        feature = np.concatenate(pieces) if len(pieces) > 1 else pieces[0]
        if dropout > 0.0:
            keep = 1.0 - dropout
            mask = (rng.random(feature.shape) < keep) / keep
            feature = feature * mask

        logits = W @ feature + params.tensors["cls.b"]
        probs = softmax(logits)
        weight = float(class_weights[item.label])
        total += -weight * np.log(max(probs[item.label], 1e-300))

        dz = probs.copy()
        dz[item.label] -= 1.0
        dz *= weight / n
        grads["cls.W"] += np.outer(dz, feature)
        grads["cls.b"] += dz
        d_feature = W.T @ dz
        if dropout > 0.0:
            d_feature = d_feature * mask

        offset = cfg.input_dim
        if cfg.num_docs:
            acc = d_ctx_acc.setdefault(
                item.context_key, [np.zeros(2 * H) for _ in range(cfg.num_docs)]
            )
            for j in range(cfg.num_docs):
                acc[j] += d_feature[offset:offset + 2 * H]
                offset += 2 * H
        if cfg.variant.is_star:
            grads["src.emb"][source_index(item.source)] += d_feature[offset:offset + cfg.source_dim]

    # One backward pass per distinct context document.
    for key, d_vecs in d_ctx_acc.items():
        _, caches = ctx_cache[key]
        for j, d_ctx in enumerate(d_vecs):
            cache = caches[j]
            T = cache[0][0].x.shape[0]
            d_top = np.zeros((T, 2 * H))
            d_top[-1, :H] = d_ctx[:H]
            d_top[0, H:] = d_ctx[H:]
            bilstm_backward(params.tensors, f"enc{j}", cfg.layers, cache, d_top, grads)

    return total / n, grads


def _tagger_loss_and_grads(
    params: CimParameters,
    items,
    class_weights: tuple[float, float] = (1.0, 1.0),
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Sequence tagging loss: mean cross-entropy over core (scored) positions."""
    cfg = params.config
    H = cfg.hidden
    W = params.tensors["cls.W"]
    grads = params.zero_grads()

    n_scored = sum(int(np.sum(item.core_mask)) for item in items)
    if n_scored == 0:
        raise ValidationError("batch has no scored positions")

    total = 0.0
    for item in items:
        seq = _check_doc(cfg, item.matrix)
        out, caches = bilstm_forward(params.tensors, "enc0", cfg.layers, seq)
        if dropout > 0.0:
            keep = 1.0 - dropout
            mask = (rng.random(out.shape) < keep) / keep
            out = out * mask
        logits = out @ W.T + params.tensors["cls.b"]
        probs = softmax(logits)

        d_logits = np.zeros_like(logits)
        for t, (label, scored) in enumerate(zip(item.labels, item.core_mask)):
            if not scored:
                continue
            weight = float(class_weights[label])
            total += -weight * np.log(max(probs[t, label], 1e-300))
            d_logits[t] = probs[t]
            d_logits[t, label] -= 1.0
            d_logits[t] *= weight
        d_logits /= n_scored

        grads["cls.W"] += d_logits.T @ out
        grads["cls.b"] += d_logits.sum(axis=0)
        d_out = d_logits @ W
        if dropout > 0.0:
            d_out = d_out * mask
        bilstm_backward(params.tensors, "enc0", cfg.layers, caches, d_out, grads)

    return total / n_scored, grads
