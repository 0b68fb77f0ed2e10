"""Model and training configuration."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from ..errors import ConfigError


class ContextVariant(enum.Enum):
    TARGET_ONLY = "target_only"
    ARTCIM = "artcim"
    ARTCIM_STAR = "artcim_star"
    EVCIM = "evcim"
    EVCIM_STAR = "evcim_star"
    WINDOW_TAGGER = "window_tagger"

    @property
    def is_star(self) -> bool:
        return self in (ContextVariant.ARTCIM_STAR, ContextVariant.EVCIM_STAR)

    @property
    def num_docs(self) -> int:
        """Context documents fed to the classifier (0 for the plain baseline)."""
        return _NUM_DOCS[self]

    @classmethod
    def parse(cls, name: str) -> "ContextVariant":
        try:
            return cls(name)
        except ValueError:
            raise ConfigError(
                f"unknown variant {name!r}; choose from "
                f"{[v.value for v in cls]}"
            ) from None


_NUM_DOCS = {
    ContextVariant.TARGET_ONLY: 0,
    ContextVariant.ARTCIM: 1,
    ContextVariant.ARTCIM_STAR: 1,
    ContextVariant.EVCIM: 3,
    ContextVariant.EVCIM_STAR: 3,
    ContextVariant.WINDOW_TAGGER: 0,  # the tagger's single BiLSTM is not a context doc
}


@dataclass(frozen=True)
class ModelConfig:
    """Shape description of a context-inclusive model.

    ``num_docs`` is 1 for article context, 3 for event context, and 0 for the
    target-only baseline.  Star variants append a learned source embedding of
    ``source_dim`` components.  The window tagger runs one BiLSTM over a
    sentence sequence and classifies every position from its 2*hidden state.
    """

    variant: ContextVariant
    input_dim: int
    hidden: int
    layers: int
    num_docs: int
    source_dim: int = 0
    num_classes: int = 2

    def __post_init__(self):
        if self.input_dim <= 0 or self.hidden <= 0 or self.layers <= 0:
            raise ConfigError("input_dim, hidden and layers must be positive")
        if self.num_classes != 2:
            raise ConfigError("only binary classification is supported")
        if self.num_docs != self.variant.num_docs:
            raise ConfigError(
                f"variant {self.variant.value} implies num_docs="
                f"{self.variant.num_docs}, got {self.num_docs}"
            )
        if self.variant.is_star != (self.source_dim > 0):
            raise ConfigError(
                "source_dim must be positive exactly for star variants "
                f"(variant={self.variant.value}, source_dim={self.source_dim})"
            )
        if self.num_docs not in (0, 1, 3):
            raise ConfigError(f"num_docs must be 0, 1 or 3, got {self.num_docs}")

    @classmethod
    def for_variant(
        cls,
        variant: ContextVariant | str,
        input_dim: int,
        hidden: int,
        layers: int,
        source_dim: int = 8,
    ) -> "ModelConfig":
        if isinstance(variant, str):
            variant = ContextVariant.parse(variant)
        return cls(
            variant=variant,
            input_dim=input_dim,
            hidden=hidden,
            layers=layers,
            num_docs=variant.num_docs,
            source_dim=source_dim if variant.is_star else 0,
        )

    @property
    def num_encoders(self) -> int:
        if self.variant is ContextVariant.WINDOW_TAGGER:
            return 1
        return self.num_docs

    @property
    def feature_width(self) -> int:
        """Classifier input width.

        Context variants: input_dim + num_docs * 2 * hidden, plus source_dim
        for star variants.  The window tagger classifies per-position BiLSTM
        states of width 2 * hidden.
        """
        if self.variant is ContextVariant.WINDOW_TAGGER:
            return 2 * self.hidden
        return self.input_dim + self.num_docs * 2 * self.hidden + self.source_dim


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    # Adaptive-moment optimizer constants (standard defaults).
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # Optional switches, all off by default.
    class_weights: tuple[float, float] = field(default=(1.0, 1.0))
    grad_clip: float = 0.0  # 0 disables clipping
    dropout: float = 0.0  # applied to the classifier input during training
    selection_metric: str = "dev_f1"  # best positive-class F1 on dev

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch size must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.grad_clip < 0:
            raise ConfigError("gradient clip threshold must be non-negative")
        if len(self.class_weights) != 2 or any(w < 0 for w in self.class_weights):
            raise ConfigError("class weights must be two non-negative numbers")
        if self.selection_metric != "dev_f1":
            raise ConfigError(f"unknown selection metric {self.selection_metric!r}")
