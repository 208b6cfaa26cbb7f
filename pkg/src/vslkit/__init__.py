"""Dataset decomposition and variable-sequence-length scheduling for LM pretraining."""

from .corpus import (
    CorpusError,
    ShardCorruptionError,
    ShardFormatError,
    ShardHeader,
    TokenizedDocument,
    byte_tokenize,
    read_jsonl,
    read_shard,
    write_shard,
)
from .costmodel import Measurement, StepTimeModel, expected_step_time, speedup
from .decompose import (
    RESERVED_DOC_ID,
    BucketStore,
    ChunkedSequence,
    PackConfig,
    Segment,
    SequenceRecord,
    best_fit_pack,
    chunk_transform,
    concat_and_chunk,
    concat_transform,
    decompose_corpus,
    decompose_document,
    prechunk,
)
from .estimators import BestFitPacker, ConcatChunker, DatasetDecomposer, VSLScheduler
from .prng import SplitMix64, prng_next
from .scheduler import (
    BatchStep,
    CurriculumSpec,
    MixtureSpec,
    ScheduleReport,
    build_mixture,
    curriculum_preset,
    make_schedule,
    mixture_preset,
    validate_schedule,
)
from .stats import Histogram, LengthStats, avg_lengths, context_distribution, mixture_avg_lengths, provenance_histogram

__version__ = "0.1.0"

__all__ = [
    "BatchStep",
    "BestFitPacker",
    "BucketStore",
    "ChunkedSequence",
    "ConcatChunker",
    "CorpusError",
    "CurriculumSpec",
    "DatasetDecomposer",
    "Histogram",
    "LengthStats",
    "Measurement",
    "MixtureSpec",
    "PackConfig",
    "RESERVED_DOC_ID",
    "ScheduleReport",
    "Segment",
    "SequenceRecord",
    "ShardCorruptionError",
    "ShardFormatError",
    "ShardHeader",
    "SplitMix64",
    "StepTimeModel",
    "TokenizedDocument",
    "VSLScheduler",
    "avg_lengths",
    "best_fit_pack",
    "build_mixture",
    "byte_tokenize",
    "chunk_transform",
    "concat_and_chunk",
    "concat_transform",
    "context_distribution",
    "curriculum_preset",
    "decompose_corpus",
    "decompose_document",
    "expected_step_time",
    "make_schedule",
    "mixture_avg_lengths",
    "mixture_preset",
    "prechunk",
    "prng_next",
    "provenance_histogram",
    "read_jsonl",
    "read_shard",
    "speedup",
    "validate_schedule",
    "write_shard",
]
