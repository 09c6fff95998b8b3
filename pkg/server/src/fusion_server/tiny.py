"""Build a tiny randomly initialized seq2seq checkpoint for CPU-only work.

The checkpoint pairs a word-level tokenizer (built from a seed text corpus)
with a two-layer encoder-decoder; it loads through the Auto classes like any
published checkpoint and decodes with beam search. Useful for contract tests
and finetuning smoke runs, useless for actual text quality.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable, Optional

import torch
from tokenizers import Tokenizer, models, pre_tokenizers
from tokenizers.processors import TemplateProcessing
from transformers import PreTrainedTokenizerFast, T5Config, T5ForConditionalGeneration

_DEFAULT_SEED_TEXT = (
    "summarize: translate Graph to English: the a an of is was in on at by "
    "for to and or operator birth place city served location material length "
    "country leader name founded eat type date height Apollo 11 NASA Alan "
    "Shepard New Hampshire Abilene Regional Airport Texas The Vaults pub "
    "River Thames Burj Khalifa Bandeja paisa Colombia Liverpool F.C. Zolder "
    "October 5 Bronze Caterpillar Inc. Sauber English food . , : ; <H> <R> <T>"
)

_WORD = re.compile(r"\w+|[^\w\s]+")


def make_tiny_checkpoint(
    out_dir: str | Path,
    seed: int = 0,
    seed_texts: Optional[Iterable[str]] = None,
) -> Path:
    """Create and save the checkpoint; returns the directory path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    vocab: dict[str, int] = {"<pad>": 0, "</s>": 1, "<unk>": 2}
    for text in [_DEFAULT_SEED_TEXT, *(seed_texts or [])]:
        for word in _WORD.findall(text):
            if word not in vocab:
                vocab[word] = len(vocab)

    tokenizer = Tokenizer(models.WordLevel(vocab, unk_token="<unk>"))
    tokenizer.pre_tokenizer = pre_tokenizers.Whitespace()
    tokenizer.post_processor = TemplateProcessing(
        single="$A </s>", special_tokens=[("</s>", 1)]
    )
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        pad_token="<pad>",
        eos_token="</s>",
        unk_token="<unk>",
    )

    config = T5Config(
        vocab_size=len(vocab),
        d_model=32,
        d_kv=8,
        d_ff=64,
        num_layers=2,
        num_decoder_layers=2,
        num_heads=2,
        decoder_start_token_id=0,
        pad_token_id=0,
        eos_token_id=1,
    )
    torch.manual_seed(seed)
    model = T5ForConditionalGeneration(config)
    model.save_pretrained(out)
    fast.save_pretrained(out)
    return out
