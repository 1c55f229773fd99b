from .synth import cmd_synth
from .train import cmd_train
from .evaluate import cmd_eval, cmd_scatter, evaluate_checkpoint
from .sweep import cmd_sweep

__all__ = [
    "cmd_synth",
    "cmd_train",
    "cmd_eval",
    "cmd_scatter",
    "evaluate_checkpoint",
    "cmd_sweep",
]
