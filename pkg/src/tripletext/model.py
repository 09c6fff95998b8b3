"""Shared domain types for the triple-to-text pipeline.

Everything here is an immutable value object with its invariants enforced at
construction time; no I/O happens in this module.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

PLACEHOLDER_SUBJECT = "<subject>"
PLACEHOLDER_OBJECT = "<object>"

SPLITS = ("train", "validation", "test", "test_seen", "test_unseen")
PROVENANCES = ("llm", "manual", "fallback")


class FieldError(ValueError):
    """A raw field value could not be turned into a usable string."""


_WS_RUN = re.compile(r"\s+")
# lower/digit -> Upper, and acronym run followed by a capitalized word
_CAMEL_1 = re.compile(r"([a-z0-9])([A-Z])")
_CAMEL_2 = re.compile(r"([A-Z]+)([A-Z][a-z])")


def normalize_field(raw: str) -> str:
    """Canonicalize one raw subject/predicate/object string.

    Underscores become single spaces (multiword entities are underscore-coded
    in the source files), whitespace runs including newlines collapse to one
    space, the result is trimmed, and one pair of straight double quotes is
    stripped when it encloses the entire value.
    """
    text = _WS_RUN.sub(" ", raw.replace("_", " ")).strip()
    if (
        len(text) >= 2
        and text.startswith('"')
        and text.endswith('"')
        and '"' not in text[1:-1]
    ):
        text = text[1:-1].strip()
    if not text:
        raise FieldError(f"field is empty after normalization: {raw!r}")
    return text


def predicate_words(predicate: str) -> str:
    """Spell a predicate name out as space-separated words.

    camelCase boundaries and underscores become spaces; tokens are lowercased
    except all-caps acronym runs, which are kept as-is.
    """
    spaced = _CAMEL_2.sub(r"\1 \2", _CAMEL_1.sub(r"\1 \2", predicate.replace("_", " ")))
    words = []
    for token in spaced.split():
        if len(token) > 1 and token.isupper():
            words.append(token)
        else:
            words.append(token.lower())
    return " ".join(words)


def _check_field(name: str, value: str) -> None:
    if not value.strip():
        raise FieldError(f"{name} is empty")
    if "\n" in value or "\r" in value:
        raise FieldError(f"{name} contains a newline: {value!r}")
    if PLACEHOLDER_SUBJECT in value or PLACEHOLDER_OBJECT in value:
        raise FieldError(f"{name} contains a placeholder literal: {value!r}")


@dataclass(frozen=True)
class Triple:
    """One subject/predicate/object fact, the atomic input unit."""

    subject: str
    predicate: str
    object: str

    def __post_init__(self) -> None:
        _check_field("subject", self.subject)
        _check_field("predicate", self.predicate)
        _check_field("object", self.object)

    def as_list(self) -> list[str]:
        return [self.subject, self.predicate, self.object]


@dataclass(frozen=True)
class DataInstance:
    """A triple set plus reference texts and metadata; one generation task.

    Triple order is preserved from the source file and is the order used by
    every downstream stage.
    """

    id: str
    triples: tuple[Triple, ...]
    references: tuple[str, ...] = ()
    category: Optional[str] = None
    split: str = "test"

    def __post_init__(self) -> None:
        object.__setattr__(self, "triples", tuple(self.triples))
        object.__setattr__(self, "references", tuple(self.references))
        if not self.id:
            raise ValueError("instance id is empty")
        if len(self.triples) < 1:
            raise ValueError(f"instance {self.id}: needs at least one triple")
        for ref in self.references:
            if not ref.strip():
                raise ValueError(f"instance {self.id}: empty reference string")
        if self.split not in SPLITS:
            raise ValueError(f"instance {self.id}: unknown split {self.split!r}")

    @property
    def predicates(self) -> tuple[str, ...]:
        return tuple(t.predicate for t in self.triples)


@dataclass(frozen=True)
class Template:
    """A per-predicate sentence pattern with subject/object placeholders.

    ``source_triple`` is the triple the pattern was mined from; fallback and
    manual templates have none.
    """

    predicate: str
    pattern: str
    source_triple: Optional[Triple] = None
    provenance: str = "llm"

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        for placeholder in (PLACEHOLDER_SUBJECT, PLACEHOLDER_OBJECT):
            n = self.pattern.count(placeholder)
            if n != 1:
                raise ValueError(
                    f"template for {self.predicate!r} has {n} occurrences of "
                    f"{placeholder}, expected exactly 1: {self.pattern!r}"
                )
        if self.provenance == "llm" and self.source_triple is None:
            raise ValueError(f"llm template for {self.predicate!r} lacks a source triple")


@dataclass(frozen=True)
class DisambiguatedSentence:
    """One short sentence verbalizing one triple of an instance."""

    triple_index: int
    text: str
    template_provenance: str

    def __post_init__(self) -> None:
        if self.triple_index < 0:
            raise ValueError("triple_index must be non-negative")
        if not self.text.strip():
            raise ValueError("disambiguated sentence is empty")
        if self.template_provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.template_provenance!r}")


@dataclass(frozen=True)
class DecodeConfig:
    """Decoding parameters transmitted unmodified to a generation backend.

    temperature 0 requires the backend to behave deterministically.
    """

    beam_width: int = 5
    max_new_tokens: int = 256
    stop_sequence: Optional[str] = None
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class InstanceScore:
    """Per-instance table-grounded precision/recall/F1."""

    id: str
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class TokenCounts:
    instances: int
    hypothesis_tokens: int
    reference_tokens: int


@dataclass(frozen=True)
class MetricReport:
    """Corpus- and instance-level scores for one evaluation run."""

    bleu: float
    parent_precision: float
    parent_recall: float
    parent_f1: float
    per_instance: tuple[InstanceScore, ...] = field(default_factory=tuple)
    counts: TokenCounts = TokenCounts(0, 0, 0)
    parent_lambda: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_instance", tuple(self.per_instance))
        if not 0.0 <= self.bleu <= 100.0:
            raise ValueError(f"bleu out of range: {self.bleu}")
        for name in ("parent_precision", "parent_recall", "parent_f1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} out of range: {value}")
        if self.parent_precision + self.parent_recall == 0 and self.parent_f1 != 0:
            raise ValueError("parent_f1 must be 0 when precision and recall are both 0")

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "bleu": self.bleu,
            "parent": {
                "precision": self.parent_precision,
                "recall": self.parent_recall,
                "f1": self.parent_f1,
                "lambda": self.parent_lambda,
            },
            "counts": {
                "instances": self.counts.instances,
                "hypothesis_tokens": self.counts.hypothesis_tokens,
                "reference_tokens": self.counts.reference_tokens,
            },
            "per_instance": [
                {"id": s.id, "precision": s.precision, "recall": s.recall, "f1": s.f1}
                for s in self.per_instance
            ],
        }


def harmonic_mean(precision: float, recall: float) -> float:
    """F1; zero when both inputs vanish."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)
