"""Command-line interface for the triple-to-text pipeline."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .backends import BackendConfig, HttpBackend, IdentityFusionBackend, mock_backend
from .corpus import (
    build_unseen_predicate_split,
    load_canonical,
    parse_dart,
    parse_e2e,
    parse_webnlg,
    sample_few_shot,
    save_canonical,
)
from .disambiguate import (
    PromptSpec,
    TemplateStore,
    disambiguate,
    ensure_templates,
    load_manual_templates,
)
from .fusion import FusionRequest, build_fusion_input, fuse, linearize_baseline
from .harness import (
    RunConfig,
    copy_pair_file,
    export_fusion_training_pairs,
    make_experiment_grid,
    run_pipeline,
)
from .metrics import evaluate as evaluate_corpus
from .model import DecodeConfig

_PARSERS = {"webnlg": parse_webnlg, "dart": parse_dart, "e2e": parse_e2e}


@click.group()
def main() -> None:
    """Convert triple sets into fluent text and evaluate the results."""


@main.command()
@click.option("--format", "format_", type=click.Choice(sorted(_PARSERS)), required=True)
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--split", default="test", show_default=True)
@click.option("--error-budget", default=0.01, show_default=True)
def ingest(format_: str, in_path: str, out_path: str, split: str, error_budget: float) -> None:
    """Parse a benchmark corpus file into canonical JSONL."""
    result = _PARSERS[format_](Path(in_path).read_bytes(), split=split, error_budget=error_budget)
    save_canonical(result.instances, out_path)
    click.echo(
        f"{len(result.instances)} instances written to {out_path} "
        f"({len(result.skipped)} skipped, {len(result.warnings)} warnings)"
    )
    for message in result.skipped + result.warnings:
        click.echo(f"  {message}", err=True)


@main.command("split-unseen")
@click.option("--train", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--dev", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--test", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def split_unseen(train: str, dev: str, test: str, out_path: str) -> None:
    """Extract the test subset whose predicates never occur in train/dev."""
    subset = build_unseen_predicate_split(
        load_canonical(train), load_canonical(dev), load_canonical(test)
    )
    save_canonical(subset, out_path)
    click.echo(f"unseen-predicate subset: {len(subset)} instances -> {out_path}")


@main.command()
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--k", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def sample(in_path: str, k: int, seed: int, out_path: str) -> None:
    """Draw a deterministic few-shot sample from a canonical corpus."""
    sampled = sample_few_shot(load_canonical(in_path), k, seed)
    save_canonical(sampled, out_path)
    click.echo(f"{len(sampled)} instances -> {out_path}")


def _completion_backend(backend: str | None, mock: str | None, offline: bool):
    if offline:
        return None
    if mock:
        return mock_backend(mock, unknown="error")
    if backend:
        return HttpBackend(BackendConfig(base_url=backend))
    raise click.UsageError("choose one of --backend, --mock, or --offline")


@main.group()
def templates() -> None:
    """Manage the per-predicate template store."""


@templates.command("mine")
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--store", "store_path", type=click.Path(dir_okay=False), required=True)
@click.option("--backend", default=None, help="Completion endpoint base URL.")
@click.option("--mock", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--offline", is_flag=True, help="Use fallback templates only.")
@click.option("--parallelism", default=1, show_default=True)
def templates_mine(
    corpus: str, store_path: str, backend: str | None, mock: str | None, offline: bool, parallelism: int
) -> None:
    """Mine one template per predicate missing from the store."""
    instances = load_canonical(corpus)
    store = TemplateStore.load(store_path) if Path(store_path).exists() else TemplateStore()
    report = ensure_templates(
        instances,
        store,
        llm_backend=_completion_backend(backend, mock, offline),
        spec=PromptSpec(),
        parallelism=parallelism,
    )
    store.save(store_path)
    click.echo(
        f"store now holds {len(store)} templates "
        f"({report.backend_calls} backend calls, {len(report.mined)} mined, "
        f"{len(report.fell_back)} fallback)"
    )
    for warning in report.warnings:
        click.echo(f"  {warning}", err=True)


@templates.command("import-manual")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--store", "store_path", type=click.Path(dir_okay=False), required=True)
def templates_import_manual(in_path: str, store_path: str) -> None:
    """Convert a flat predicate-to-pattern JSON map into a template store."""
    store = load_manual_templates(in_path)
    store.save(store_path)
    click.echo(f"{len(store)} manual templates -> {store_path}")


@main.command()
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--store", "store_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def verbalize(corpus: str, store_path: str, out_path: str) -> None:
    """Write one short sentence per triple for every instance."""
    store = TemplateStore.load(store_path)
    lines = []
    for instance in load_canonical(corpus):
        sentences = disambiguate(instance, store)
        lines.append(
            json.dumps(
                {"id": instance.id, "sentences": [s.text for s in sentences]},
                ensure_ascii=False,
            )
        )
    Path(out_path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    click.echo(f"{len(lines)} instances verbalized -> {out_path}")


@main.command("fuse")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--backend", default=None, help="Generation endpoint base URL.")
@click.option("--mock", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--identity", is_flag=True, help="Echo inputs minus the task prefix.")
@click.option("--beam", default=5, show_default=True)
@click.option("--max-new-tokens", default=256, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def fuse_cmd(
    in_path: str,
    backend: str | None,
    mock: str | None,
    identity: bool,
    beam: int,
    max_new_tokens: int,
    out_path: str,
) -> None:
    """Fuse verbalized sentences into final descriptions."""
    if identity:
        engine = IdentityFusionBackend()
    elif mock:
        engine = mock_backend(mock, unknown="error")
    elif backend:
        engine = HttpBackend(BackendConfig(base_url=backend))
    else:
        raise click.UsageError("choose one of --backend, --mock, or --identity")
    decode = DecodeConfig(beam_width=beam, max_new_tokens=max_new_tokens)
    lines = []
    failures = 0
    for line in Path(in_path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        try:
            request = FusionRequest(build_fusion_input(record["sentences"]), decode)
            text = fuse(request, engine)
        except Exception as exc:
            failures += 1
            click.echo(f"  {record['id']}: {exc}", err=True)
            text = ""
        lines.append(json.dumps({"id": record["id"], "text": text}, ensure_ascii=False))
    Path(out_path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    click.echo(f"{len(lines)} instances fused -> {out_path} ({failures} failed)")


@main.command()
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def linearize(corpus: str, out_path: str) -> None:
    """Write the flat marker-tagged baseline encoding for every instance."""
    lines = [
        json.dumps({"id": i.id, "text": linearize_baseline(i)}, ensure_ascii=False)
        for i in load_canonical(corpus)
    ]
    Path(out_path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    click.echo(f"{len(lines)} instances linearized -> {out_path}")


@main.command("evaluate")
@click.option("--hyp", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--parent-lambda", default=0.5, show_default=True)
def evaluate_cmd(hyp: str, corpus: str, out_path: str, parent_lambda: float) -> None:
    """Score hypotheses (JSONL with id/text, or one-per-line text) against a corpus."""
    instances = load_canonical(corpus)
    text = Path(hyp).read_text(encoding="utf-8")
    lines = [line for line in text.splitlines() if line.strip()]
    if hyp.endswith(".jsonl"):
        hyps = {}
        for line in lines:
            record = json.loads(line)
            hyps[record["id"]] = record["text"]
    else:
        if len(lines) != len(instances):
            raise click.UsageError(
                f"{len(lines)} hypothesis lines vs {len(instances)} instances"
            )
        hyps = {instance.id: line for instance, line in zip(instances, lines)}
    report = evaluate_corpus(hyps, instances, parent_lambda=parent_lambda)
    Path(out_path).write_text(
        json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    click.echo(
        f"BLEU {report.bleu:.2f} | precision {report.parent_precision:.4f} "
        f"recall {report.parent_recall:.4f} F1 {report.parent_f1:.4f} -> {out_path}"
    )


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
def run(config_path: str) -> None:
    """Execute one configured end-to-end run."""
    manifest = run_pipeline(RunConfig.from_file(config_path))
    ok = sum(1 for s in manifest.instance_status if s["status"] == "ok")
    click.echo(
        f"run complete: {ok}/{len(manifest.instance_status)} instances ok; "
        f"outputs in {manifest.config['out_dir']}"
    )


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--shots", default="0,10,20,50,100", show_default=True)
def grid(config_path: str, shots: str) -> None:
    """Expand a base config into one run per shot count and execute them."""
    base = RunConfig.from_file(config_path)
    shot_values = [s.strip() for s in shots.split(",") if s.strip()]
    parsed = [s if s == "full" else int(s) for s in shot_values]
    for config in make_experiment_grid(base, parsed):
        manifest = run_pipeline(config)
        click.echo(f"shots={config.shots}: outputs in {config.out_dir}")


@main.command("export-pairs")
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--store", "store_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--pairs-in", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def export_pairs(corpus: str | None, store_path: str | None, pairs_in: str | None, out_path: str) -> None:
    """Export fusion finetuning pairs, or pass a pre-split pair file through."""
    if pairs_in:
        count = copy_pair_file(pairs_in, out_path)
        click.echo(f"{count} pairs passed through -> {out_path}")
        return
    if not corpus or not store_path:
        raise click.UsageError("need either --pairs-in, or both --corpus and --store")
    instances = load_canonical(corpus)
    store = TemplateStore.load(store_path)
    count = export_fusion_training_pairs(instances, store, out_path)
    skipped = sum(1 for i in instances if not i.references)
    click.echo(f"{count} pairs -> {out_path} ({skipped} unlabeled instances skipped)")


if __name__ == "__main__":
    sys.exit(main())
