"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: validation problems exit 2, missing
inputs exit 3, numerical failures exit 4.
"""


class InfobiasError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(InfobiasError):
    """Input is structurally readable but violates a semantic constraint."""


class CorpusParseError(ValidationError):
    """Corpus file does not match the canonical schema.

    Carries a human-readable location (story index / article source /
    sentence id) in the message.
    """


class CorpusValidationError(ValidationError):
    """Corpus parsed but breaks an invariant (duplicate ids, bad triple...)."""


class FormatError(ValidationError):
    """A binary artifact (EMB1 / CIM1) is malformed or truncated."""


class ConfigError(ValidationError):
    """An experiment or model configuration is inconsistent."""


class MissingInputError(InfobiasError):
    """A required file or embedding entry is absent."""


class NumericalError(InfobiasError):
    """Training or evaluation produced non-finite numbers."""
