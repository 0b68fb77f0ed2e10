"""Fine-tune an encoder on one fold and embed the whole corpus.

The flow is: load the pretrained checkpoint, train a sentence-level bias
classifier on the fold's training stories for a fixed number of epochs,
keep the epoch with the best dev F1 on the biased class, then run the
frozen winner over every sentence.  Each sentence vector is the mean of
the classifier-token states from the last four encoder layers.  Without
a fold plan (frozen mode) the classifier head is never trained and the
pretrained weights are used as-is.
"""

from __future__ import annotations

import logging

import numpy as np
import torch

from infobias.corpus import Corpus, label_index
from infobias.embeddings import EmbeddingTable, write_embeddings
from infobias.errors import ConfigError, MissingInputError, ValidationError
from infobias.evaluation import prf1
from infobias.splits import FoldPlan

from .recipe import EncoderRecipe

log = logging.getLogger("infobias_embedder")

# model_max_length sentinel used by tokenizers with no intrinsic limit
_NO_LIMIT = 10**6

ENCODE_BATCH = 32


def load_encoder(recipe: EncoderRecipe, num_labels: int = 2):
    """Load tokenizer and classification model for the recipe's checkpoint.

    The classifier head is freshly initialized when the checkpoint has
    none, so seeding must happen before this call for reproducibility.
    """
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(recipe.base_model)
        model = AutoModelForSequenceClassification.from_pretrained(
            recipe.base_model, num_labels=num_labels
        )
    except (OSError, ValueError) as exc:
        raise MissingInputError(
            f"cannot load base model {recipe.base_model!r}: {exc}"
        ) from exc
    if model.config.num_hidden_layers < 4:
        raise ValidationError(
            f"base model {recipe.base_model!r} has "
            f"{model.config.num_hidden_layers} layers; pooling needs at least 4"
        )
    return tokenizer, model


def max_token_length(tokenizer, model) -> int:
    """Truncation limit: tokenizer's window, else the position table size."""
    limit = getattr(tokenizer, "model_max_length", None)
    if limit is not None and limit < _NO_LIMIT:
        return int(limit)
    return int(getattr(model.config, "max_position_embeddings", 512))


def fold_sentence_pools(corpus: Corpus, plan: FoldPlan, fold: int):
    """Training and dev (text, label) pools for one fold.

    Every sentence of every article in a story follows the story's split
    assignment, so nothing from a test story ever touches the encoder.
    """
    if not 0 <= fold < plan.k:
        raise ConfigError(f"fold {fold} out of range for a {plan.k}-fold plan")
    plan_ids = set(plan.story_ids)
    corpus_ids = set(corpus.story_ids())
    if plan_ids != corpus_ids:
        raise ValidationError("fold plan and corpus cover different stories")
    fold_def = plan.folds[fold]
    train: list[tuple[str, int]] = []
    dev: list[tuple[str, int]] = []
    for story, _art, sent in corpus.iter_sentences():
        pair = (sent.text, label_index(sent))
        if story.story_id in fold_def.train_story_ids:
            train.append(pair)
        elif story.story_id in fold_def.dev_story_ids:
            dev.append(pair)
    if not train:
        raise ValidationError(f"fold {fold} has no training sentences")
    if not dev:
        raise ValidationError(f"fold {fold} has no dev sentences")
    return train, dev


def pool_states(hidden_states) -> torch.Tensor:
    """Mean of the classifier-token vectors from the last four layers.

    ``hidden_states`` is the tuple returned with output_hidden_states
    (embeddings first, deepest layer last); result is (batch, hidden).
    """
    stacked = torch.stack(tuple(hidden_states[-4:]))  # (4, B, T, H)
    return stacked[:, :, 0, :].mean(dim=0)


def _batches(n: int, size: int, order=None):
    idx = order if order is not None else range(n)
    for start in range(0, n, size):
        yield [idx[i] for i in range(start, min(start + size, n))]


def _tokenize(tokenizer, texts, max_len, device):
    enc = tokenizer(
        list(texts),
        return_tensors="pt",
        padding=True,
        truncation=True,
        max_length=max_len,
    )
    return {k: v.to(device) for k, v in enc.items()}


@torch.no_grad()
def _dev_f1(model, tokenizer, dev, max_len, device) -> float:
    model.eval()
    golds = [label for _, label in dev]
    preds: list[int] = []
    for batch in _batches(len(dev), ENCODE_BATCH):
        enc = _tokenize(tokenizer, [dev[i][0] for i in batch], max_len, device)
        logits = model(**enc).logits
        preds.extend(int(p) for p in logits.argmax(dim=-1).tolist())
    return prf1(golds, preds).f1


def finetune(model, tokenizer, train, dev, recipe: EncoderRecipe, seed: int, device) -> float:
    """Train the bias classifier; restore the best dev-F1 epoch's weights.

    Returns the best dev F1.  Ties keep the earlier epoch.
    """
    max_len = max_token_length(tokenizer, model)
    optimizer = torch.optim.AdamW(model.parameters(), lr=recipe.learning_rate)
    rng = np.random.default_rng(seed)
    best_f1 = -1.0
    best_state = None
    for epoch in range(recipe.epochs):
        model.train()
        order = rng.permutation(len(train)).tolist()
        for batch in _batches(len(train), recipe.batch_size, order):
            enc = _tokenize(tokenizer, [train[i][0] for i in batch], max_len, device)
            labels = torch.tensor([train[i][1] for i in batch], device=device)
            loss = model(**enc, labels=labels).loss
            loss.backward()
            optimizer.step()
            optimizer.zero_grad()
        f1 = _dev_f1(model, tokenizer, dev, max_len, device)
        log.info("epoch %d: dev F1 %.2f", epoch, f1)
        if f1 > best_f1:
            best_f1 = f1
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    model.load_state_dict(best_state)
    return best_f1


@torch.no_grad()
def encode_corpus(model, tokenizer, corpus: Corpus, device) -> dict[str, np.ndarray]:
    """Embed every sentence with the frozen model; warn once on truncation."""
    model.eval()
    max_len = max_token_length(tokenizer, model)
    sentences = [(sent.id, sent.text) for _, _, sent in corpus.iter_sentences()]
    truncated = 0
    vectors: dict[str, np.ndarray] = {}
    for batch in _batches(len(sentences), ENCODE_BATCH):
        texts = [sentences[i][1] for i in batch]
        lengths = [len(ids) for ids in tokenizer(texts)["input_ids"]]
        truncated += sum(1 for n in lengths if n > max_len)
        enc = _tokenize(tokenizer, texts, max_len, device)
        pooled = pool_states(model(**enc, output_hidden_states=True).hidden_states)
        for i, row in zip(batch, pooled.cpu().numpy()):
            vectors[sentences[i][0]] = row.astype(np.float32)
    if truncated:
        log.warning(
            "%d sentence(s) exceed the encoder window of %d tokens; truncated",
            truncated,
            max_len,
        )
    return vectors


def encode_fold(
    corpus: Corpus,
    plan: FoldPlan | None,
    fold: int | None,
    recipe: EncoderRecipe,
    seed: int,
    out_path,
) -> EmbeddingTable:
    """Produce one embedding file; returns the table that was written."""
    if recipe.finetune and (plan is None or fold is None):
        raise ConfigError("fine-tuning needs a fold plan and a fold index")
    torch.manual_seed(seed)
    tokenizer, model = load_encoder(recipe)
    device = torch.device("cuda" if torch.cuda.is_available() else "cpu")
    model.to(device)
    if recipe.finetune:
        train, dev = fold_sentence_pools(corpus, plan, fold)
        best = finetune(model, tokenizer, train, dev, recipe, seed, device)
        log.info("best dev F1 %.2f on fold %d", best, fold)
    elif plan is not None and fold is not None:
        # range check still applies so a bad --fold fails loudly
        fold_sentence_pools(corpus, plan, fold)
    vectors = encode_corpus(model, tokenizer, corpus, device)
    dim = int(model.config.hidden_size)
    table = EmbeddingTable(
        dim=dim,
        fold_tag=fold,
        encoder_tag=recipe.tag(seed, dim),
    )
    for sid, vec in vectors.items():
        table.add(sid, vec)
    write_embeddings(table, out_path)
    return table
