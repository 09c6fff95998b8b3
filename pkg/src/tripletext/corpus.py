"""Corpus ingestion: benchmark parsers, the canonical JSONL interchange
format, and derived splits (few-shot samples, unseen-predicate subsets).

Three published formats are read: challenge XML (entries with a modified
tripleset and lexicalizations), release JSON (records with a tripleset and
annotations), and the restaurant-domain CSV (attribute[value] meaning
representations). Everything downstream consumes the canonical JSONL.

Record-level damage fails the record, not the file; parsers count skips and
fail the file only when skips exceed the error budget.
"""

from __future__ import annotations

import json
import random
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .model import DataInstance, FieldError, Triple, normalize_field

FORMATS = ("webnlg_xml", "dart_json", "e2e_csv", "canonical_jsonl")


class ParseError(ValueError):
    """File-level parse failure (malformed input or blown error budget)."""


@dataclass
class ParseResult:
    """Parsed instances plus the per-record skip/warning bookkeeping."""

    instances: list[DataInstance]
    skipped: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def check_budget(self, budget: float) -> "ParseResult":
        total = len(self.instances) + len(self.skipped)
        if total and len(self.skipped) / total > budget:
            details = "; ".join(self.skipped)
            raise ParseError(
                f"{len(self.skipped)}/{total} records bad exceeds error budget "
                f"{budget:.2%}: {details}"
            )
        return self


def _unique_id(base: str, seen: set[str]) -> str:
    candidate = base
    n = 2
    while candidate in seen:
        candidate = f"{base}-{n}"
        n += 1
    seen.add(candidate)
    return candidate


def parse_webnlg(xml_bytes: bytes, split: str = "test", error_budget: float = 0.01) -> ParseResult:
    """Parse challenge XML into instances, one per entry.

    Each ``s | p | o`` triple string is split on the pipe delimiter and
    normalized; all lexicalizations become references; the category attribute
    is preserved. Entries whose triple strings are malformed are skipped.
    """
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        line, column = exc.position
        raise ParseError(f"malformed XML at line {line}, column {column}: {exc}") from exc
    result = ParseResult(instances=[])
    seen_ids: set[str] = set()
    for index, entry in enumerate(root.iter("entry")):
        eid = entry.get("eid") or f"entry{index}"
        category = entry.get("category")
        entry_id = _unique_id(f"{category}-{eid}" if category else eid, seen_ids)
        try:
            triples = []
            for mtriple in entry.iter("mtriple"):
                parts = (mtriple.text or "").split("|")
                if len(parts) != 3:
                    raise FieldError(
                        f"triple string has {len(parts) - 1} pipe delimiters, expected 2: "
                        f"{mtriple.text!r}"
                    )
                triples.append(Triple(*(normalize_field(p) for p in parts)))
            references = []
            for lex in entry.iter("lex"):
                text = "".join(lex.itertext()).strip()
                if text:
                    references.append(text)
            result.instances.append(
                DataInstance(entry_id, tuple(triples), tuple(references), category, split)
            )
        except (FieldError, ValueError) as exc:
            result.skipped.append(f"entry {entry_id}: {exc}")
    return result.check_budget(error_budget)


def parse_dart(json_bytes: bytes, split: str = "test", error_budget: float = 0.01) -> ParseResult:
    """Parse the release JSON array into instances, one per record.

    Triple arrays of length 3 map positionally to subject/predicate/object;
    every annotation text becomes a reference and annotation sources are
    joined into the category (the provenance tag used for cross-corpus
    cleaning). Records with an empty tripleset are skipped with a warning.
    """
    try:
        records = json.loads(json_bytes)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc
    if not isinstance(records, list):
        raise ParseError("expected a top-level JSON array of records")
    result = ParseResult(instances=[])
    for index, record in enumerate(records):
        record_id = f"dart-{index:05d}"
        tripleset = record.get("tripleset", [])
        if not tripleset:
            result.warnings.append(f"record {record_id}: empty tripleset, skipped")
            continue
        try:
            triples = []
            for arr in tripleset:
                if len(arr) != 3:
                    raise FieldError(f"triple array of length {len(arr)}, expected 3: {arr!r}")
                triples.append(Triple(*(normalize_field(str(p)) for p in arr)))
            references = []
            sources = []
            for annotation in record.get("annotations", []):
                text = str(annotation.get("text", "")).strip()
                if text:
                    references.append(text)
                source = annotation.get("source")
                if source and source not in sources:
                    sources.append(source)
            category = "+".join(sources) if sources else None
            result.instances.append(
                DataInstance(record_id, tuple(triples), tuple(references), category, split)
            )
        except (FieldError, ValueError) as exc:
            result.skipped.append(f"record {record_id}: {exc}")
    return result.check_budget(error_budget)


_MR_ATTR = re.compile(r"([^,\[\]]+)\[([^\[\]]*)\]")


def parse_e2e(csv_bytes: bytes, split: str = "test", error_budget: float = 0.01) -> ParseResult:
    """Parse the restaurant-domain CSV into instances.

    The ``name`` attribute value becomes the shared subject and every other
    attribute becomes one triple; rows sharing an identical MR string merge
    into one multi-reference instance. Duplicate references are kept.
    """
    import csv
    import io

    text = csv_bytes.decode("utf-8-sig")
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ParseError("empty CSV file")
    columns = {name.strip().lower(): name for name in reader.fieldnames}
    if "mr" not in columns or "ref" not in columns:
        raise ParseError(f"expected 'mr' and 'ref' columns, found {reader.fieldnames}")

    result = ParseResult(instances=[])
    by_mr: dict[str, DataInstance] = {}
    order: list[str] = []
    for row_number, row in enumerate(reader, start=2):
        mr = (row[columns["mr"]] or "").strip()
        ref = (row[columns["ref"]] or "").strip()
        if mr in by_mr:
            if ref:
                old = by_mr[mr]
                by_mr[mr] = DataInstance(
                    old.id, old.triples, old.references + (ref,), old.category, old.split
                )
            continue
        try:
            matches = _MR_ATTR.findall(mr)
            if mr.count("[") != mr.count("]") or mr.count("[") != len(matches):
                raise FieldError(f"unbalanced brackets in MR: {mr!r}")
            attrs = [(name.strip(), value) for name, value in matches]
            if not attrs:
                raise FieldError(f"no attributes in MR: {mr!r}")
            subject = None
            rest = []
            for name, value in attrs:
                if name == "name" and subject is None:
                    subject = normalize_field(value)
                else:
                    rest.append((name, value))
            if subject is None:
                subject = normalize_field(attrs[0][1])
                rest = attrs[1:]
                result.warnings.append(
                    f"row {row_number}: MR without a name attribute, "
                    f"using first value as subject: {mr!r}"
                )
            if not rest:
                raise FieldError(f"MR has no predicate attributes beyond the name: {mr!r}")
            triples = tuple(
                Triple(subject, normalize_field(name), normalize_field(value))
                for name, value in rest
            )
            instance_id = f"e2e-{len(order):05d}"
            by_mr[mr] = DataInstance(
                instance_id, triples, (ref,) if ref else (), None, split
            )
            order.append(mr)
        except (FieldError, ValueError) as exc:
            result.skipped.append(f"row {row_number}: {exc}")
    result.instances = [by_mr[mr] for mr in order]
    return result.check_budget(error_budget)


def write_canonical(instances: Iterable[DataInstance]) -> bytes:
    """Serialize instances to the canonical line-delimited interchange format.

    Field order is fixed so the byte output is deterministic across runs.
    """
    lines = []
    for instance in instances:
        record = {
            "id": instance.id,
            "triples": [t.as_list() for t in instance.triples],
            "references": list(instance.references),
            "category": instance.category,
            "split": instance.split,
        }
        lines.append(json.dumps(record, ensure_ascii=False))
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


def read_canonical(jsonl_bytes: bytes) -> list[DataInstance]:
    """Inverse of write_canonical; read . write is the identity."""
    instances = []
    ids_seen: set[str] = set()
    duplicates: list[str] = []
    for line_number, line in enumerate(jsonl_bytes.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {line_number}: malformed JSON: {exc}") from exc
        instance = DataInstance(
            id=record["id"],
            triples=tuple(Triple(*arr) for arr in record["triples"]),
            references=tuple(record.get("references", ())),
            category=record.get("category"),
            split=record.get("split", "test"),
        )
        if instance.id in ids_seen:
            duplicates.append(instance.id)
        ids_seen.add(instance.id)
        instances.append(instance)
    if duplicates:
        raise ParseError(f"duplicate instance ids: {sorted(set(duplicates))}")
    return instances


def load_canonical(path: str | Path) -> list[DataInstance]:
    return read_canonical(Path(path).read_bytes())


def save_canonical(instances: Iterable[DataInstance], path: str | Path) -> None:
    Path(path).write_bytes(write_canonical(instances))


def predicate_inventory(instances: Iterable[DataInstance]) -> set[str]:
    """Distinct normalized predicate strings across the given instances."""
    return {t.predicate for instance in instances for t in instance.triples}


def build_unseen_predicate_split(
    train: Sequence[DataInstance],
    validation: Sequence[DataInstance],
    test: Sequence[DataInstance],
) -> list[DataInstance]:
    """Test instances in which EVERY predicate is absent from train+validation.

    Comparison is case-sensitive over normalized predicate strings.
    """
    seen = predicate_inventory(train) | predicate_inventory(validation)
    return [
        instance
        for instance in test
        if all(t.predicate not in seen for t in instance.triples)
    ]


def sample_few_shot(train: Sequence[DataInstance], k: int, seed: int) -> list[DataInstance]:
    """Uniform sample of k instances without replacement, deterministic per seed.

    Instances are sorted by id before sampling so the result does not depend
    on input order.
    """
    if k > len(train):
        raise ValueError(f"cannot sample {k} of {len(train)} instances")
    ordered = sorted(train, key=lambda i: i.id)
    return random.Random(seed).sample(ordered, k)


@dataclass(frozen=True)
class CorpusManifest:
    """Named corpus with one source file per split."""

    name: str
    splits: dict[str, str]
    format: str

    def __post_init__(self) -> None:
        if self.format not in FORMATS:
            raise ValueError(f"unknown corpus format {self.format!r}")

    def validate(self) -> None:
        for split, path in self.splits.items():
            if not Path(path).is_file():
                raise FileNotFoundError(f"{self.name}/{split}: missing file {path}")

    def load(self, split: str, error_budget: float = 0.01) -> list[DataInstance]:
        data = Path(self.splits[split]).read_bytes()
        if self.format == "canonical_jsonl":
            return read_canonical(data)
        parser = {"webnlg_xml": parse_webnlg, "dart_json": parse_dart, "e2e_csv": parse_e2e}[
            self.format
        ]
        return parser(data, split=split, error_budget=error_budget).instances
