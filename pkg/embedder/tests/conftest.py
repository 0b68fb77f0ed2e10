import json
import os

import pytest

# Tests must never reach the model hub; every checkpoint is built locally.
os.environ.setdefault("HF_HUB_OFFLINE", "1")

import torch
from tokenizers import Tokenizer
from tokenizers.models import WordPiece
from tokenizers.normalizers import Lowercase
from tokenizers.pre_tokenizers import Whitespace
from tokenizers.processors import TemplateProcessing
from transformers import BertConfig, BertForSequenceClassification, BertTokenizerFast

from infobias.corpus import parse_corpus
from infobias.splits import make_story_folds, save_plan

TEXTS = (
    "the mayor cut the budget",
    "critics called the plan reckless and cruel",
    "council members debated for hours",
    "a spokesman declined to comment",
    "the bill passed on a narrow vote",
    "opponents promised a swift appeal",
)


def corpus_doc(n_stories=3, n_sentences=2, long_sentence=None):
    """Toy corpus: every story has one article per outlet.

    Sentence (s, j, i) is biased iff s + j + i is divisible by three, so
    both classes appear in every story.  ``long_sentence`` optionally
    replaces the first sentence text to exercise truncation.
    """
    sources = (("FOX", "right"), ("NYT", "center"), ("HPO", "left"))
    stories = []
    for s in range(n_stories):
        articles = []
        for j, (source, leaning) in enumerate(sources):
            sentences = []
            for i in range(n_sentences):
                text = TEXTS[(s + 2 * j + i) % len(TEXTS)]
                if long_sentence is not None and s == j == i == 0:
                    text = long_sentence
                spans = []
                if (s + j + i) % 3 == 0:
                    spans.append({"start": 0, "end": 3, "kind": "informational"})
                sentences.append(
                    {"id": f"{s:02d}{source.lower()}{i:02d}", "index": i, "text": text, "spans": spans}
                )
            articles.append({"source": source, "leaning": leaning, "sentences": sentences})
        stories.append({"story_id": f"{s:02d}", "articles": articles})
    return {"stories": stories}


def write_dataset(root, n_stories=3, k=3, **doc_kwargs):
    corpus_path = root / "corpus.json"
    corpus_path.write_text(json.dumps(corpus_doc(n_stories, **doc_kwargs)))
    corpus = parse_corpus(corpus_path)
    folds_path = root / "folds.json"
    save_plan(make_story_folds(corpus, k=k, seed=0), folds_path, corpus)
    return corpus_path, folds_path, corpus


def build_tiny_model(out_dir, num_layers=4, hidden=16, max_len=64):
    """Randomly initialized BERT small enough for CPU test runs."""
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    letters = [chr(c) for c in range(ord("a"), ord("z") + 1)]
    vocab += letters + ["##" + c for c in letters]

    backend = Tokenizer(WordPiece({t: i for i, t in enumerate(vocab)}, unk_token="[UNK]"))
    backend.normalizer = Lowercase()
    backend.pre_tokenizer = Whitespace()
    backend.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab.index("[CLS]")), ("[SEP]", vocab.index("[SEP]"))],
    )
    tok = BertTokenizerFast(
        tokenizer_object=backend,
        model_max_length=max_len,
        pad_token="[PAD]",
        unk_token="[UNK]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )
    tok.save_pretrained(out_dir)

    torch.manual_seed(7)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=hidden,
        num_hidden_layers=num_layers,
        num_attention_heads=2,
        intermediate_size=2 * hidden,
        max_position_embeddings=max_len,
        num_labels=2,
    )
    BertForSequenceClassification(config).save_pretrained(out_dir)
    return out_dir


@pytest.fixture(scope="session")
def tiny_model(tmp_path_factory):
    return str(build_tiny_model(tmp_path_factory.mktemp("tinybert")))


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    corpus_path, folds_path, corpus = write_dataset(root)
    return {"corpus": corpus_path, "folds": folds_path, "parsed": corpus}
