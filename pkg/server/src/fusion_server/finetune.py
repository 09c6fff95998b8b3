"""Finetune a seq2seq checkpoint on (source, target) pair files.

Defaults follow the fusion-model recipe: adaptive-moment optimizer with
learning rate 3e-5, effective batch size 64 (reached via gradient
accumulation when the micro batch is smaller), one epoch. The training log
records those defaults alongside whatever was actually used, plus the loss
before and after training. Checkpoints carry a trainer state so a resumed run
continues the global step count monotonically.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import torch
from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

DEFAULT_LEARNING_RATE = 3e-5
DEFAULT_BATCH_SIZE = 64
DEFAULT_EPOCHS = 1


@dataclass(frozen=True)
class FinetuneSettings:
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    epochs: int = DEFAULT_EPOCHS
    micro_batch_size: Optional[int] = None
    max_length: int = 128
    seed: int = 0


def read_pairs(path: str | Path) -> list[tuple[str, str]]:
    pairs = []
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        record = json.loads(line)
        source, target = record.get("source"), record.get("target")
        if not isinstance(source, str) or not isinstance(target, str):
            raise ValueError(f"{path}:{number}: pair needs string 'source' and 'target'")
        pairs.append((source, target))
    if not pairs:
        raise ValueError(f"{path}: no training pairs found")
    return pairs


def finetune(
    pairs_path: str | Path,
    model_path: str | Path,
    out_dir: str | Path,
    settings: FinetuneSettings = FinetuneSettings(),
    device: str = "cpu",
) -> Path:
    """Train and save a checkpoint plus ``training_log.json``; returns out_dir."""
    pairs = read_pairs(pairs_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    tokenizer = AutoTokenizer.from_pretrained(model_path)
    model = AutoModelForSeq2SeqLM.from_pretrained(model_path).to(device)

    start_step = 0
    state_path = Path(model_path) / "trainer_state.json"
    if state_path.exists():
        start_step = json.loads(state_path.read_text())["global_step"]

    micro = settings.micro_batch_size or min(settings.batch_size, len(pairs))
    accumulation = max(1, math.ceil(settings.batch_size / micro))

    def encode(batch: list[tuple[str, str]]):
        sources = [s for s, _ in batch]
        targets = [t for _, t in batch]
        encoded = tokenizer(
            sources, return_tensors="pt", padding=True, truncation=True,
            max_length=settings.max_length,
        ).to(device)
        labels = tokenizer(
            targets, return_tensors="pt", padding=True, truncation=True,
            max_length=settings.max_length,
        )["input_ids"].to(device)
        labels[labels == tokenizer.pad_token_id] = -100
        return encoded, labels

    def full_loss() -> float:
        model.eval()
        total, count = 0.0, 0
        with torch.no_grad():
            for start in range(0, len(pairs), micro):
                encoded, labels = encode(pairs[start : start + micro])
                n = labels.shape[0]
                total += model(**encoded, labels=labels).loss.item() * n
                count += n
        return total / count

    torch.manual_seed(settings.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=settings.learning_rate)
    initial_loss = full_loss()
    steps: list[dict] = []
    global_step = start_step
    generator = torch.Generator().manual_seed(settings.seed)

    for epoch in range(settings.epochs):
        order = torch.randperm(len(pairs), generator=generator).tolist()
        shuffled = [pairs[i] for i in order]
        model.train()
        optimizer.zero_grad()
        pending = 0
        for index, start in enumerate(range(0, len(shuffled), micro)):
            encoded, labels = encode(shuffled[start : start + micro])
            loss = model(**encoded, labels=labels).loss / accumulation
            loss.backward()
            pending += 1
            is_last = start + micro >= len(shuffled)
            if pending == accumulation or is_last:
                optimizer.step()
                optimizer.zero_grad()
                global_step += 1
                steps.append(
                    {"step": global_step, "epoch": epoch, "loss": loss.item() * accumulation}
                )
                pending = 0
    final_loss = full_loss()

    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    (out / "trainer_state.json").write_text(
        json.dumps({"global_step": global_step}) + "\n", encoding="utf-8"
    )
    log = {
        "defaults": {
            "learning_rate": DEFAULT_LEARNING_RATE,
            "batch_size": DEFAULT_BATCH_SIZE,
            "epochs": DEFAULT_EPOCHS,
        },
        "effective": asdict(settings) | {"micro_batch_size": micro, "accumulation": accumulation},
        "pairs": len(pairs),
        "start_step": start_step,
        "global_step": global_step,
        "initial_loss": initial_loss,
        "final_loss": final_loss,
        "steps": steps,
    }
    (out / "training_log.json").write_text(
        json.dumps(log, indent=2) + "\n", encoding="utf-8"
    )
    return out
