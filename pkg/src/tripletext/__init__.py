"""Two-stage triple-to-text generation.

Stage 1 turns each subject/predicate/object triple into a short unambiguous
sentence using a per-predicate template mined once from a completion backend.
Stage 2 fuses those sentences into one fluent paragraph with a seq2seq
backend. Corpus parsers, an experiment harness, and reference-plus-table
evaluation metrics round out the pipeline.
"""

from .model import (
    DataInstance,
    DecodeConfig,
    DisambiguatedSentence,
    MetricReport,
    Template,
    Triple,
    normalize_field,
    predicate_words,
)

__all__ = [
    "DataInstance",
    "DecodeConfig",
    "DisambiguatedSentence",
    "MetricReport",
    "Template",
    "Triple",
    "normalize_field",
    "predicate_words",
]

__version__ = "0.1.0"
