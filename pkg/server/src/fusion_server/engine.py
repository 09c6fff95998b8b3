"""Seq2seq generation engine over a local checkpoint.

Model invocation is serialized behind a lock and micro-batched, so request
handling can stay concurrent without sharing mutable state. Greedy decoding
(beam width 1, no sampling) is deterministic across identical requests.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Optional, Sequence

import torch
from transformers import AutoModelForSeq2SeqLM, AutoTokenizer


class EngineError(RuntimeError):
    """Model or tokenizer could not be loaded."""


class GenerationEngine:
    def __init__(self, model_path: str, device: str = "cpu", max_batch_size: int = 8):
        if max_batch_size < 1:
            raise ValueError("max_batch_size must be >= 1")
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_path)
            self.model = AutoModelForSeq2SeqLM.from_pretrained(model_path)
        except Exception as exc:
            raise EngineError(f"cannot load checkpoint {model_path}: {exc}") from exc
        self.model.to(device)
        self.model.eval()
        self.device = device
        self.max_batch_size = max_batch_size
        self.identity = Path(model_path).name or model_path
        self._lock = threading.Lock()

    def generate(
        self,
        inputs: Sequence[str],
        num_beams: int = 5,
        max_new_tokens: int = 256,
        stop: Optional[str] = None,
    ) -> list[str]:
        """One output string per input, beam-searched, stop-truncated."""
        outputs: list[str] = []
        for start in range(0, len(inputs), self.max_batch_size):
            batch = list(inputs[start : start + self.max_batch_size])
            encoded = self.tokenizer(
                batch, return_tensors="pt", padding=True, truncation=True, max_length=512
            ).to(self.device)
            with self._lock, torch.no_grad():
                generated = self.model.generate(
                    **encoded,
                    num_beams=num_beams,
                    max_new_tokens=max_new_tokens,
                    do_sample=False,
                )
            outputs.extend(self.tokenizer.batch_decode(generated, skip_special_tokens=True))
        if stop:
            outputs = [text.split(stop)[0] for text in outputs]
        return outputs
