"""Encoder fine-tuning recipe.

The recipe is deliberately small: base model, a fixed schedule, and a
flag for skipping fine-tuning entirely.  Pooling is not a knob; every
embedding is the mean of the classifier-token vectors from the last four
encoder layers.  The recipe plus seed is serialized into the encoder tag
stored alongside the embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

from infobias.errors import ConfigError

POOLING = "cls-last4-mean"


@dataclass(frozen=True)
class EncoderRecipe:
    """What gets fine-tuned, for how long, and from which checkpoint."""

    base_model: str = "roberta-base"
    epochs: int = 10
    learning_rate: float = 1e-5
    batch_size: int = 16
    finetune: bool = True

    def __post_init__(self) -> None:
        if not self.base_model:
            raise ConfigError("base model identifier must not be empty")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch size must be at least 1")

    def tag(self, seed: int, dim: int) -> str:
        """Serialize the recipe and seed into a provenance string.

        The tag lands in the embedding file's sidecar, so two files made
        with different schedules can never be confused for each other.
        """
        mode = "finetuned" if self.finetune else "frozen"
        return (
            f"{self.base_model}|{mode}|epochs={self.epochs}"
            f"|lr={self.learning_rate}|batch={self.batch_size}"
            f"|pool={POOLING}|dim={dim}|seed={seed}"
        )
