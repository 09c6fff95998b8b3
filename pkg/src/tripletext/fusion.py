"""Stage 2: fuse the short sentences into one paragraph via a seq2seq backend.

The fusion input mimics a summarization task: the sentences are joined with
single spaces behind the "summarize: " prefix. The flat marker-tagged
baseline encoding lives here too, for comparison runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .model import DataInstance, DecodeConfig

FUSION_PREFIX = "summarize: "
BASELINE_PREFIX = "translate Graph to English: "


class FusionError(RuntimeError):
    """The backend produced no usable fusion output."""


@dataclass(frozen=True)
class FusionRequest:
    """Formatted fusion input plus the decoding parameters for the backend."""

    input_text: str
    decode: DecodeConfig = DecodeConfig()

    def __post_init__(self) -> None:
        if not self.input_text.startswith(FUSION_PREFIX):
            raise ValueError(f"fusion input must start with {FUSION_PREFIX!r}")


def build_fusion_input(sentences: Sequence[str]) -> str:
    """Prefix plus the sentences joined by single spaces, untouched inside."""
    if not sentences:
        raise ValueError("cannot build a fusion input from zero sentences")
    for sentence in sentences:
        if not sentence.strip():
            raise ValueError("empty sentence in fusion input")
    return FUSION_PREFIX + " ".join(sentences)


def fuse(request: FusionRequest, backend) -> str:
    """Return the backend's single best sequence, trimmed.

    The request is never mutated; no input-length chunking happens here, so
    oversized inputs surface as per-instance backend errors rather than being
    silently truncated.
    """
    output = backend.generate(request.input_text, request.decode)
    trimmed = output.strip()
    if not trimmed:
        raise FusionError("backend returned empty output")
    return trimmed


def linearize_baseline(instance: DataInstance) -> str:
    """Flat marker-tagged encoding of the triple set, in triple order."""
    parts = [
        f"<H> {t.subject} <R> {t.predicate} <T> {t.object}" for t in instance.triples
    ]
    return BASELINE_PREFIX + " ".join(parts)
