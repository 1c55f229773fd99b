from .batching import PairBatch, PairSampler, build_pair_batch
from .optimizer import Adam, SGD, build_optimizer
from .checkpoint import Checkpoint, CHECKPOINT_VERSION, load_checkpoint, save_checkpoint
from .trainer import Trainer, check_sampling, train, write_curve

__all__ = [
    "PairBatch",
    "PairSampler",
    "build_pair_batch",
    "Adam",
    "SGD",
    "build_optimizer",
    "Checkpoint",
    "CHECKPOINT_VERSION",
    "load_checkpoint",
    "save_checkpoint",
    "Trainer",
    "check_sampling",
    "train",
    "write_curve",
]
