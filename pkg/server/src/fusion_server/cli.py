"""Command-line entry points: serve, finetune, make-tiny."""

from __future__ import annotations

import click

from .engine import GenerationEngine
from .finetune import FinetuneSettings, finetune
from .tiny import make_tiny_checkpoint


@click.group()
def main() -> None:
    """Serve and finetune local seq2seq checkpoints."""


@main.command()
@click.option("--model", required=True, help="Checkpoint directory or model identifier.")
@click.option("--port", default=8008, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--device", default="cpu", show_default=True)
@click.option("--max-batch-size", default=5, show_default=True,
              help="Micro-batch cap, mirroring the few-shot decoding batch size.")
def serve(model: str, port: int, host: str, device: str, max_batch_size: int) -> None:
    """Serve the generation wire contract over a local checkpoint."""
    import uvicorn

    from .app import create_app

    engine = GenerationEngine(model, device=device, max_batch_size=max_batch_size)
    uvicorn.run(create_app(engine), host=host, port=port, log_level="warning")


@main.command("finetune")
@click.option("--pairs", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--model", required=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--lr", default=3e-5, show_default=True)
@click.option("--batch", default=64, show_default=True)
@click.option("--epochs", default=1, show_default=True)
@click.option("--micro-batch", default=None, type=int, help="Per-step batch; gradients accumulate up to --batch.")
@click.option("--seed", default=0, show_default=True)
@click.option("--device", default="cpu", show_default=True)
def finetune_cmd(
    pairs: str, model: str, out_dir: str, lr: float, batch: int, epochs: int,
    micro_batch: int | None, seed: int, device: str,
) -> None:
    """Finetune a checkpoint on a (source, target) pair JSONL file."""
    settings = FinetuneSettings(
        learning_rate=lr, batch_size=batch, epochs=epochs,
        micro_batch_size=micro_batch, seed=seed,
    )
    out = finetune(pairs, model, out_dir, settings, device=device)
    click.echo(f"checkpoint written to {out}")


@main.command("make-tiny")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True)
def make_tiny(out_dir: str, seed: int) -> None:
    """Build a tiny random checkpoint for offline contract testing."""
    path = make_tiny_checkpoint(out_dir, seed=seed)
    click.echo(f"tiny checkpoint written to {path}")


if __name__ == "__main__":
    main()
