"""End-to-end orchestration: config-driven runs, provenance manifests, and
training-pair export.

A run executes ingest -> ensure templates -> disambiguate -> build fusion
input -> fuse -> evaluate, writing hypotheses JSONL, a metric report, and a
run manifest into the output directory. Instances are stripped of their
references before any generation stage so hypotheses provably cannot depend
on them; references are only read back at evaluation time.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field, replace
from hashlib import sha256
from pathlib import Path
from typing import Optional, Sequence, Union

from . import backends as backends_mod
from .backends import CountingBackend, build_backend, parallel_map
from .corpus import load_canonical, sample_few_shot
from .disambiguate import (
    PromptSpec,
    TemplateStore,
    disambiguate,
    ensure_templates,
    prompt_prefix_hash,
)
from .fusion import FusionRequest, build_fusion_input, fuse, linearize_baseline
from .metrics import evaluate
from .model import DataInstance, DecodeConfig

MODES = ("two_stage", "baseline_linearized")


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment needs; seeds are mandatory, never wall-clock."""

    corpus: str
    out_dir: str
    seed: int
    shots: Union[int, str] = 0
    train_corpus: Optional[str] = None
    template_store: Optional[str] = None
    disambiguation_backend: dict = field(default_factory=lambda: {"kind": "offline"})
    fusion_backend: dict = field(default_factory=lambda: {"kind": "identity"})
    decode: DecodeConfig = DecodeConfig()
    mode: str = "two_stage"
    parent_lambda: float = 0.5
    drop_sources: tuple[str, ...] = ()
    parallelism: int = 1

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if isinstance(self.shots, str) and self.shots != "full":
            raise ValueError(f"shots must be an integer or 'full', got {self.shots!r}")
        if isinstance(self.shots, int) and self.shots < 0:
            raise ValueError("shots must be non-negative")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        base = Path(path).resolve().parent
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(raw, base)

    @classmethod
    def from_dict(cls, raw: dict, base: Optional[Path] = None) -> "RunConfig":
        raw = dict(raw)
        if "decode" in raw and isinstance(raw["decode"], dict):
            raw["decode"] = DecodeConfig(**raw["decode"])
        if "drop_sources" in raw:
            raw["drop_sources"] = tuple(raw["drop_sources"])
        config = cls(**raw)
        if base is not None:
            config = config.resolved(base)
        return config

    def resolved(self, base: Path) -> "RunConfig":
        """Resolve every path against ``base`` and require inputs to exist."""

        def resolve(p: Optional[str], must_exist: bool) -> Optional[str]:
            if p is None:
                return None
            full = Path(p) if Path(p).is_absolute() else base / p
            if must_exist and not full.exists():
                raise FileNotFoundError(f"configured path does not exist: {full}")
            return str(full)

        return replace(
            self,
            corpus=resolve(self.corpus, must_exist=True),
            out_dir=resolve(self.out_dir, must_exist=False),
            train_corpus=resolve(self.train_corpus, must_exist=True),
            template_store=resolve(self.template_store, must_exist=False),
            disambiguation_backend=_resolve_backend(self.disambiguation_backend, base),
            fusion_backend=_resolve_backend(self.fusion_backend, base),
        )

    def to_dict(self) -> dict:
        payload = dataclasses.asdict(self)
        payload["decode"] = dataclasses.asdict(self.decode)
        payload["drop_sources"] = list(self.drop_sources)
        return payload


def _resolve_backend(spec: dict, base: Path) -> dict:
    if spec.get("kind") == "mock" and "fixture" in spec:
        fixture = Path(spec["fixture"])
        if not fixture.is_absolute():
            spec = {**spec, "fixture": str(base / fixture)}
    return spec


@dataclass
class RunManifest:
    """Provenance record for one run; written atomically at run end."""

    config: dict
    corpus_hashes: dict[str, str]
    template_store_hash: Optional[str] = None
    prompt_prefix_sha256: Optional[str] = None
    backend_identities: dict[str, str] = field(default_factory=dict)
    instance_status: list[dict] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)
    references_hidden_during_generation: bool = True
    failed_stage: Optional[str] = None
    started_at: str = ""
    finished_at: str = ""
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write(self, path: str | Path) -> None:
        atomic_write_text(
            Path(path), json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"
        )


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def file_sha256(path: str | Path) -> str:
    return sha256(Path(path).read_bytes()).hexdigest()


def drop_overlapping_sources(
    instances: Sequence[DataInstance], banned: Sequence[str]
) -> list[DataInstance]:
    """Remove instances whose provenance category mentions a banned source."""
    lowered = [b.lower() for b in banned]
    kept = []
    for instance in instances:
        category = (instance.category or "").lower()
        if any(b in category for b in lowered):
            continue
        kept.append(instance)
    return kept


def strip_references(instances: Sequence[DataInstance]) -> list[DataInstance]:
    """Reference-free copies handed to the generation stages."""
    return [replace(i, references=()) for i in instances]


def export_fusion_training_pairs(
    instances: Sequence[DataInstance],
    store: TemplateStore,
    out_path: str | Path,
) -> int:
    """Write (fusion input, reference) pairs, one line per reference.

    Instances without references are skipped. Returns the number of pairs.
    """
    lines = []
    for instance in instances:
        if not instance.references:
            continue
        sentences = [s.text for s in disambiguate(instance, store)]
        source = build_fusion_input(sentences)
        for reference in instance.references:
            lines.append(json.dumps({"source": source, "target": reference}, ensure_ascii=False))
    atomic_write_text(Path(out_path), "\n".join(lines) + ("\n" if lines else ""))
    return len(lines)


def copy_pair_file(in_path: str | Path, out_path: str | Path) -> int:
    """Validate and pass through an existing pair JSONL file."""
    count = 0
    lines = []
    for number, line in enumerate(Path(in_path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        record = json.loads(line)
        if not isinstance(record.get("source"), str) or not isinstance(record.get("target"), str):
            raise ValueError(f"{in_path}:{number}: pair needs string 'source' and 'target'")
        lines.append(json.dumps({"source": record["source"], "target": record["target"]}, ensure_ascii=False))
        count += 1
    atomic_write_text(Path(out_path), "\n".join(lines) + ("\n" if lines else ""))
    return count


def make_experiment_grid(
    base_config: RunConfig, shots: Sequence[Union[int, str]] = (0, 10, 20, 50, 100)
) -> list[RunConfig]:
    """One config per shot count; seeds derive from the base seed by index."""
    configs = []
    for index, shot in enumerate(shots):
        if isinstance(shot, int) and shot < 0:
            raise ValueError("shot counts must be non-negative")
        configs.append(
            replace(
                base_config,
                shots=shot,
                seed=base_config.seed + index,
                out_dir=str(Path(base_config.out_dir) / f"shots_{shot}"),
                train_corpus=None if shot == 0 else base_config.train_corpus,
            )
        )
    return configs


def run_pipeline(config: RunConfig) -> RunManifest:
    """Execute one full run; partial outputs survive stage failures."""
    started = time.time()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        config=config.to_dict(),
        corpus_hashes={config.corpus: file_sha256(config.corpus)},
        started_at=_utc_now(),
    )
    manifest_path = out_dir / "manifest.json"

    def fail(stage: str, exc: Exception) -> RunManifest:
        manifest.failed_stage = stage
        manifest.finished_at = _utc_now()
        manifest.wall_clock_s = time.time() - started
        manifest.write(manifest_path)
        raise exc

    stage = "ingest"
    try:
        instances = load_canonical(config.corpus)
        if config.drop_sources:
            instances = drop_overlapping_sources(instances, config.drop_sources)
        train_sample: list[DataInstance] = []
        if config.train_corpus is not None:
            manifest.corpus_hashes[config.train_corpus] = file_sha256(config.train_corpus)
            train = load_canonical(config.train_corpus)
            if config.shots == "full":
                train_sample = sorted(train, key=lambda i: i.id)
            elif config.shots:
                train_sample = sample_few_shot(train, config.shots, config.seed)
    except Exception as exc:
        return fail(stage, exc)

    generation_instances = strip_references(instances)
    disambiguation_backend = build_backend(config.disambiguation_backend)
    fusion_backend = CountingBackend(build_backend(config.fusion_backend))
    if disambiguation_backend is not None:
        disambiguation_backend = CountingBackend(disambiguation_backend)

    store = TemplateStore()
    if config.mode == "two_stage":
        stage = "templates"
        try:
            store_path = (
                Path(config.template_store)
                if config.template_store
                else out_dir / "template_store.json"
            )
            if store_path.exists():
                store = TemplateStore.load(store_path)
            template_corpus = generation_instances + strip_references(train_sample)
            report = ensure_templates(
                template_corpus,
                store,
                llm_backend=disambiguation_backend,
                spec=PromptSpec(),
                parallelism=config.parallelism,
            )
            store.save(store_path)
            manifest.template_store_hash = store.content_hash()
            manifest.prompt_prefix_sha256 = prompt_prefix_hash(PromptSpec())
            manifest.counters["template_backend_calls"] = report.backend_calls
            manifest.counters["templates_mined"] = len(report.mined)
            manifest.counters["templates_fallback"] = len(report.fell_back)
        except Exception as exc:
            return fail(stage, exc)

    stage = "generate"
    hypotheses: dict[str, str] = {}
    try:
        def generate_one(instance: DataInstance) -> tuple[str, str, Optional[str]]:
            try:
                if config.mode == "two_stage":
                    sentences = [s.text for s in disambiguate(instance, store)]
                    input_text = build_fusion_input(sentences)
                else:
                    input_text = linearize_baseline(instance)
                    # the baseline path feeds the raw linearization to the backend
                    text = fusion_backend.generate(input_text, config.decode).strip()
                    if not text:
                        raise backends_mod.TransportError("empty baseline output")
                    return instance.id, text, None
                request = FusionRequest(input_text=input_text, decode=config.decode)
                return instance.id, fuse(request, fusion_backend), None
            except Exception as exc:
                return instance.id, "", f"{type(exc).__name__}: {exc}"

        results = parallel_map(generate_one, generation_instances, config.parallelism)
        for instance_id, text, error in results:
            hypotheses[instance_id] = text
            status = {"id": instance_id, "status": "ok" if error is None else "failed"}
            if error:
                status["error"] = error
            manifest.instance_status.append(status)
        lines = [
            json.dumps({"id": i.id, "text": hypotheses[i.id]}, ensure_ascii=False)
            for i in instances
        ]
        atomic_write_text(out_dir / "hypotheses.jsonl", "\n".join(lines) + ("\n" if lines else ""))
    except Exception as exc:
        return fail(stage, exc)

    if train_sample and config.mode == "two_stage":
        stage = "export_pairs"
        try:
            pair_count = export_fusion_training_pairs(
                train_sample, store, out_dir / "training_pairs.jsonl"
            )
            manifest.counters["training_pairs"] = pair_count
        except Exception as exc:
            return fail(stage, exc)

    stage = "evaluate"
    try:
        if all(i.references for i in instances) and instances:
            report = evaluate(hypotheses, instances, parent_lambda=config.parent_lambda)
            atomic_write_text(
                out_dir / "report.json",
                json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n",
            )
        else:
            manifest.counters["evaluation_skipped_unlabeled"] = sum(
                1 for i in instances if not i.references
            )
    except Exception as exc:
        return fail(stage, exc)

    manifest.backend_identities = {
        "disambiguation": getattr(disambiguation_backend, "identity", "offline"),
        "fusion": fusion_backend.identity,
    }
    manifest.counters["completion_calls"] = (
        disambiguation_backend.completion_calls if disambiguation_backend else 0
    )
    manifest.counters["generation_calls"] = fusion_backend.generation_calls
    manifest.finished_at = _utc_now()
    manifest.wall_clock_s = time.time() - started
    manifest.write(manifest_path)
    return manifest


def _utc_now() -> str:
    from datetime import datetime, timezone

    return datetime.now(timezone.utc).isoformat()
