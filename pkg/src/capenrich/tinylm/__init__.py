"""Small autoregressive decoder with a visual prefix and tunable prompts.

Everything runs in float64 numpy with hand-written backward passes, so
gradients can be checked against finite differences exactly.
"""

from .config import TinyLMConfig, TrainHyper
from .model import (
    PromptTable,
    TrainBatch,
    TrainExample,
    attention_mask,
    backward,
    batch_from_examples,
    detail_accuracy,
    forward,
    init_params,
    init_prompts,
    sequence_loss,
)
from .train import TrainResult, train
from .decode import DecodeResult, decode
from .checkpoint import Checkpoint, backbone_bytes, load_checkpoint, save_checkpoint

__all__ = [
    "TinyLMConfig",
    "TrainHyper",
    "PromptTable",
    "TrainBatch",
    "TrainExample",
    "init_params",
    "init_prompts",
    "attention_mask",
    "forward",
    "sequence_loss",
    "backward",
    "batch_from_examples",
    "detail_accuracy",
    "train",
    "TrainResult",
    "decode",
    "DecodeResult",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "backbone_bytes",
]
