from .config import EncoderConfig, TrainConfig, EvalConfig
from .dataset import (
    RawDigitSet,
    Patch,
    ClassSplit,
    NDigitImage,
    ImageCollection,
    NDigitDataset,
)
from .embedding import (
    EmbeddingDistribution,
    EmbeddingBatch,
    MatchHead,
    SampleSet,
)

__all__ = [
    # Config models
    "EncoderConfig",
    "TrainConfig",
    "EvalConfig",
    # Dataset models
    "RawDigitSet",
    "Patch",
    "ClassSplit",
    "NDigitImage",
    "ImageCollection",
    "NDigitDataset",
    # Embedding models
    "EmbeddingDistribution",
    "EmbeddingBatch",
    "MatchHead",
    "SampleSet",
]
