"""Stage 1: turn each triple into a short unambiguous sentence.

A completion backend is queried once per predicate: one triple containing the
predicate (the first in corpus order) is formatted into a few-shot prompt, the
returned sentence has its subject and object replaced by placeholders, and the
resulting template is cached and reused for every other triple with the same
predicate. Extraction failures fall back to a mechanical template so the
pipeline stays total over open-domain predicates; provenance is recorded for
auditing.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from hashlib import sha256
from pathlib import Path
from typing import Optional, Sequence

from .model import (
    PLACEHOLDER_OBJECT,
    PLACEHOLDER_SUBJECT,
    DataInstance,
    DisambiguatedSentence,
    Template,
    Triple,
    predicate_words,
)

# The default few-shot demonstrations, used verbatim for every domain.
DEFAULT_PROMPT_PREFIX = (
    "Table: Michael | birth Place | USA\n"
    "Text: Michael was born in the USA.\n"
    "\n"
    "Table: First Clearing | location | On NYS 52 1 Mi. Youngsville\n"
    "Text: First Clearing is located at On NYS 52 1 Mi. Youngsville.\n"
    "\n"
    "Table: Abilene Regional Airport | city Served | Abilene Texas\n"
    "Text: Abilene Regional Airport serves Abilene Texas.\n"
    "\n"
    "Table: Alfred Moore Scales | active Years Start Date | 1875-03-04\n"
    "Text: Alfred Moore Scales started to be active on 1875-03-04."
)

QUERY_FORMAT = "Table: {subject} | {predicate} | {object}\nText:"

_TERMINAL = (".", "!", "?")


class PromptFieldError(ValueError):
    """A triple field would corrupt the prompt's table row."""


class TemplateExtractionFailure(Exception):
    """Subject or object could not be located in the generated sentence."""

    def __init__(self, message: str, sentence: str):
        super().__init__(message)
        self.sentence = sentence


class MissingTemplateError(KeyError):
    """No template is cached for a predicate that needs one."""


class StoreError(ValueError):
    """Template store file is inconsistent or unusable."""


@dataclass(frozen=True)
class PromptSpec:
    """Prompt text plus the decoding settings sent with every completion."""

    prefix: str = DEFAULT_PROMPT_PREFIX
    query_format: str = QUERY_FORMAT
    stop_sequence: str = "\n"
    max_new_tokens: int = 256
    temperature: float = 0.0


def prompt_prefix_hash(spec: PromptSpec) -> str:
    return sha256(spec.prefix.encode("utf-8")).hexdigest()


def build_prompt(triple: Triple, spec: PromptSpec = PromptSpec()) -> str:
    """Format the query for one triple, appended to the demonstration prefix.

    Demonstrations and the live query are separated by one blank line; fields
    are inserted verbatim.
    """
    for name, value in (("subject", triple.subject), ("predicate", triple.predicate), ("object", triple.object)):
        if "|" in value:
            raise PromptFieldError(f"{name} contains a pipe character: {value!r}")
    query = spec.query_format.format(
        subject=triple.subject, predicate=triple.predicate, object=triple.object
    )
    if not spec.prefix:
        return query
    return spec.prefix + "\n\n" + query


def _find_span(sentence: str, value: str, taken: Optional[tuple[int, int]]) -> Optional[tuple[int, int]]:
    """First word-boundary occurrence of value not overlapping the taken span.

    Case-sensitive occurrences win; a case-insensitive pass catches recased
    output (which costs byte-exact round-tripping, so it comes second).
    """
    pattern = re.compile(r"(?<!\w)" + re.escape(value) + r"(?!\w)")
    for flags in (0, re.IGNORECASE):
        regex = pattern if flags == 0 else re.compile(pattern.pattern, re.IGNORECASE)
        for match in regex.finditer(sentence):
            span = match.span()
            if taken is None or span[1] <= taken[0] or span[0] >= taken[1]:
                return span
    return None


def mine_template(triple: Triple, llm_sentence: str) -> Template:
    """Replace the triple's subject and object in a sentence with placeholders.

    Matching is longest-field-first and word-boundary-aware so short objects
    are not bound inside longer subjects. The sentence is trimmed and given a
    terminal period if it lacks one, matching what apply_template produces, so
    applying the template to the source triple round-trips byte-exactly
    whenever the sentence contained the fields verbatim.
    """
    sentence = llm_sentence.strip()
    if not sentence:
        raise TemplateExtractionFailure("empty sentence", llm_sentence)
    if not sentence.endswith(_TERMINAL):
        sentence += "."

    fields = [(PLACEHOLDER_SUBJECT, triple.subject), (PLACEHOLDER_OBJECT, triple.object)]
    fields.sort(key=lambda item: len(item[1]), reverse=True)

    first_span = _find_span(sentence, fields[0][1], None)
    if first_span is None:
        raise TemplateExtractionFailure(
            f"{fields[0][0]} value {fields[0][1]!r} not found in {sentence!r}", sentence
        )
    second_span = _find_span(sentence, fields[1][1], first_span)
    if second_span is None:
        raise TemplateExtractionFailure(
            f"{fields[1][0]} value {fields[1][1]!r} not found outside the "
            f"{fields[0][0]} span in {sentence!r}",
            sentence,
        )

    replacements = sorted(
        [(first_span, fields[0][0]), (second_span, fields[1][0])], reverse=True
    )
    pattern = sentence
    for (start, end), placeholder in replacements:
        pattern = pattern[:start] + placeholder + pattern[end:]
    try:
        return Template(triple.predicate, pattern, source_triple=triple, provenance="llm")
    except ValueError as exc:
        raise TemplateExtractionFailure(str(exc), sentence) from exc


def apply_template(template: Template, triple: Triple) -> str:
    """Substitute the triple into the pattern; output always ends a sentence."""
    if template.predicate != triple.predicate:
        raise ValueError(
            f"template for {template.predicate!r} applied to triple with "
            f"predicate {triple.predicate!r}"
        )
    text = template.pattern.replace(PLACEHOLDER_SUBJECT, triple.subject).replace(
        PLACEHOLDER_OBJECT, triple.object
    )
    if not text.endswith(_TERMINAL):
        text += "."
    return text


def fallback_template(predicate: str) -> Template:
    """Mechanical subject-words-object template used when mining fails."""
    pattern = f"{PLACEHOLDER_SUBJECT} {predicate_words(predicate)} {PLACEHOLDER_OBJECT}"
    return Template(predicate, pattern, source_triple=None, provenance="fallback")


class TemplateStore:
    """At most one template per predicate, persistable as sorted-key JSON."""

    def __init__(self) -> None:
        self.entries: dict[str, Template] = {}
        self.created_at: dict[str, str] = {}

    def __contains__(self, predicate: str) -> bool:
        return predicate in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TemplateStore):
            return NotImplemented
        return self.entries == other.entries and self.created_at == other.created_at

    def get(self, predicate: str) -> Template:
        try:
            return self.entries[predicate]
        except KeyError:
            raise MissingTemplateError(predicate) from None

    def add(self, template: Template, created_at: Optional[str] = None) -> None:
        if template.predicate in self.entries:
            raise StoreError(f"duplicate template for predicate {template.predicate!r}")
        self.entries[template.predicate] = template
        self.created_at[template.predicate] = created_at or datetime.now(timezone.utc).isoformat()

    @property
    def provenance_counts(self) -> dict[str, int]:
        counts = {"llm": 0, "manual": 0, "fallback": 0}
        for template in self.entries.values():
            counts[template.provenance] += 1
        return counts

    def _entry_dict(self, predicate: str, with_timestamps: bool = True) -> dict:
        template = self.entries[predicate]
        record = {
            "pattern": template.pattern,
            "source_triple": template.source_triple.as_list() if template.source_triple else None,
            "provenance": template.provenance,
        }
        if with_timestamps:
            record["created_at"] = self.created_at[predicate]
        return record

    def to_json(self) -> str:
        payload = {p: self._entry_dict(p) for p in self.entries}
        return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2)

    def content_hash(self) -> str:
        """Hash of the store minus timestamps; stable across identical reruns."""
        payload = {p: self._entry_dict(p, with_timestamps=False) for p in self.entries}
        return sha256(
            json.dumps(payload, ensure_ascii=False, sort_keys=True).encode("utf-8")
        ).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TemplateStore":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise StoreError(f"template store {path}: malformed JSON: {exc}") from exc
        store = cls()
        for predicate, record in payload.items():
            source = record.get("source_triple")
            template = Template(
                predicate,
                record["pattern"],
                source_triple=Triple(*source) if source else None,
                provenance=record["provenance"],
            )
            store.add(template, created_at=record.get("created_at"))
        return store


def load_manual_templates(path: str | Path) -> TemplateStore:
    """Load a flat predicate-to-pattern JSON map as manual templates."""

    def reject_duplicates(pairs):
        keys = [k for k, _ in pairs]
        duplicates = sorted({k for k in keys if keys.count(k) > 1})
        if duplicates:
            raise StoreError(f"duplicate predicate keys: {duplicates}")
        return dict(pairs)

    try:
        mapping = json.loads(
            Path(path).read_text(encoding="utf-8"), object_pairs_hook=reject_duplicates
        )
    except json.JSONDecodeError as exc:
        raise StoreError(f"manual template file {path}: malformed JSON: {exc}") from exc
    store = TemplateStore()
    bad_entries = []
    for predicate, pattern in mapping.items():
        try:
            store.add(Template(predicate, pattern, source_triple=None, provenance="manual"))
        except ValueError as exc:
            bad_entries.append(f"{predicate!r}: {exc}")
    if bad_entries:
        raise StoreError("invalid manual templates: " + "; ".join(bad_entries))
    return store


def first_triple_per_predicate(instances: Sequence[DataInstance]) -> dict[str, Triple]:
    """Deterministic sampling rule: first triple in corpus order per predicate."""
    chosen: dict[str, Triple] = {}
    for instance in instances:
        for triple in instance.triples:
            if triple.predicate not in chosen:
                chosen[triple.predicate] = triple
    return chosen


@dataclass
class EnsureReport:
    """What ensure_templates did: query count and per-predicate outcomes."""

    backend_calls: int = 0
    mined: list[str] = field(default_factory=list)
    fell_back: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def ensure_templates(
    instances: Sequence[DataInstance],
    store: TemplateStore,
    llm_backend=None,
    spec: PromptSpec = PromptSpec(),
    parallelism: int = 1,
) -> EnsureReport:
    """Mine templates for every predicate missing from the store.

    One backend query per missing predicate, never more; a rerun over the
    same corpus issues zero. Without a backend (offline mode) missing
    predicates get fallback templates. Queries may run concurrently up to
    ``parallelism``; insertion stays single-threaded and deterministic.
    """
    chosen = first_triple_per_predicate(instances)
    missing = [p for p in chosen if p not in store]
    report = EnsureReport()

    def mine_one(predicate: str) -> tuple[str, Template, Optional[str], bool]:
        triple = chosen[predicate]
        if llm_backend is None:
            return predicate, fallback_template(predicate), None, False
        try:
            prompt = build_prompt(triple, spec)
        except PromptFieldError as exc:
            return predicate, fallback_template(predicate), f"prompt build failed: {exc}", False
        try:
            sentence = llm_backend.complete(prompt, spec)
        except Exception as exc:
            return predicate, fallback_template(predicate), f"backend failure: {exc}", True
        try:
            return predicate, mine_template(triple, sentence), None, True
        except TemplateExtractionFailure as exc:
            return predicate, fallback_template(predicate), f"extraction failed: {exc}", True

    if parallelism > 1 and missing:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(mine_one, missing))
    else:
        results = [mine_one(p) for p in missing]

    for predicate, template, warning, called in results:
        store.add(template)
        report.backend_calls += int(called)
        if warning:
            report.warnings.append(f"{predicate}: {warning}")
            report.fell_back.append(predicate)
        elif template.provenance == "llm":
            report.mined.append(predicate)
        else:
            report.fell_back.append(predicate)
    return report


def disambiguate(instance: DataInstance, store: TemplateStore) -> list[DisambiguatedSentence]:
    """One sentence per triple, in triple order."""
    sentences = []
    for index, triple in enumerate(instance.triples):
        template = store.get(triple.predicate)
        sentences.append(
            DisambiguatedSentence(index, apply_template(template, triple), template.provenance)
        )
    return sentences
