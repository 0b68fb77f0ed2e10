"""Sentence embedders that feed the context-inclusive bias models.

Fine-tunes a pretrained transformer on the training sentences of one
cross-validation fold, then freezes it and encodes every sentence in the
corpus.  Output is an EMB1 embedding file whose sidecar records the fold
and the exact recipe used, so downstream training can refuse mismatched
inputs.
"""

from .recipe import POOLING, EncoderRecipe
from .encode import encode_fold

__all__ = ["POOLING", "EncoderRecipe", "encode_fold"]
