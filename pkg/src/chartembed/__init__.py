"""Chart embeddings from declarative chart facts.

Charts are described as seven-part "chart facts"; their structure derives a
fixed 60-rule grammar sequence and their text maps to pooled word vectors.
A small convolutional encoder fuses both into one fixed-size vector whose
geometry reflects chart context inside multi-view visualizations.
"""

__version__ = "0.1.0"

from .facts import (
    Aggregation,
    ChartFact,
    ChartType,
    FactType,
    FieldRef,
    FieldType,
    Filter,
    Focus,
    MeasureSpec,
    StoryRef,
    parse_fact_json,
    serialize_fact,
    validate_fact,
)
from .grammar import RuleSequence, decode_skeleton, derive_rules, encode_one_hot, grammar_dump
from .semantics import VectorStore, build_semantic_block, extract_tokens, load_vector_store, pool_word
from .encoder import (
    EncoderConfig,
    EncoderParams,
    encode_chart,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .learning import (
    HyperParams,
    TrainingSample,
    adam_step,
    combined_loss,
    grad_check,
    interpolation_loss,
    train,
    triplet_loss,
)
from .corpus import Corpus, MultiViewVis, build_samples, load_corpus, split_corpus
from .evaluation import (
    EmbeddingIndex,
    MetricsReport,
    build_index,
    compute_metrics,
    nearest,
    run_ablation,
)

__all__ = [
    "Aggregation",
    "ChartFact",
    "ChartType",
    "Corpus",
    "EmbeddingIndex",
    "EncoderConfig",
    "EncoderParams",
    "FactType",
    "FieldRef",
    "FieldType",
    "Filter",
    "Focus",
    "HyperParams",
    "MeasureSpec",
    "MetricsReport",
    "MultiViewVis",
    "RuleSequence",
    "StoryRef",
    "TrainingSample",
    "VectorStore",
    "adam_step",
    "build_index",
    "build_samples",
    "build_semantic_block",
    "combined_loss",
    "compute_metrics",
    "decode_skeleton",
    "derive_rules",
    "encode_chart",
    "encode_one_hot",
    "extract_tokens",
    "forward",
    "grad_check",
    "grammar_dump",
    "init_params",
    "interpolation_loss",
    "load_checkpoint",
    "load_corpus",
    "load_vector_store",
    "nearest",
    "parse_fact_json",
    "pool_word",
    "run_ablation",
    "save_checkpoint",
    "serialize_fact",
    "split_corpus",
    "train",
    "triplet_loss",
    "validate_fact",
]
