from . import (
    autodiff,
    encoder,
    hib,
    training,
    evaluation,
)

__all__ = [
    "autodiff",
    "encoder",
    "hib",
    "training",
    "evaluation",
]
