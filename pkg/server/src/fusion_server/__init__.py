"""Reference server for the generation wire contract over local seq2seq
checkpoints, plus a small finetuning entry point."""

from .engine import GenerationEngine
from .finetune import FinetuneSettings, finetune
from .tiny import make_tiny_checkpoint

__all__ = ["GenerationEngine", "FinetuneSettings", "finetune", "make_tiny_checkpoint"]

__version__ = "0.1.0"
