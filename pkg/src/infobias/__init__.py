"""Sentence-level informational bias detection with document context.

Subpackages and modules:

- ``corpus``: story/article/sentence data model, JSON parsing, statistics
- ``splits``: sentence splits and story-level cross-validation folds
- ``embeddings``: the EMB1 binary sentence-vector format
- ``windowing``: fixed-length windows with unscored book-end sentences
- ``model``: BiLSTM context encoders, classifier, training, checkpoints
- ``evaluation``: P/R/F1, seed aggregation, t-tests, stratified analyses
- ``synthetic``: construction of synthetic corpora and embeddings
- ``runner``: experiment orchestration over folds and seeds
"""

from .corpus import (
    ArticleRecord,
    Corpus,
    CorpusStats,
    SentenceRecord,
    Span,
    Story,
    corpus_stats,
    parse_corpus,
    save_corpus,
)
from .embeddings import EmbeddingTable, read_embeddings, write_embeddings
from .errors import (
    ConfigError,
    CorpusParseError,
    CorpusValidationError,
    FormatError,
    InfobiasError,
    MissingInputError,
    NumericalError,
    ValidationError,
)
from .evaluation import (
    MetricReport,
    SeedAggregate,
    StratifiedReport,
    SubjectivityLexicon,
    TTestResult,
    aggregate_seeds,
    assign_length_bin,
    has_strong_subjective_clue,
    independent_t_test,
    length_quartiles,
    load_mpqa_lexicon,
    prf1,
    stratify,
)
from .model import (
    CimParameters,
    ContextVariant,
    ModelConfig,
    TrainConfig,
    forward,
    grad_check,
    init_params,
    predict,
    train,
)
from .runner import (
    RunConfig,
    RunManifest,
    compare_runs,
    load_run_config,
    run_experiment,
    verify_run,
)
from .splits import FoldPlan, make_sentence_split, make_story_folds, verify_no_story_leakage
from .windowing import reassemble_predictions, segment_article

__version__ = "0.1.0"
