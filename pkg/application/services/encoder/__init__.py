from .encoder import (
    Encoder,
    EmbeddingNodes,
    check_images,
    embed,
    encode,
    init_params,
    match_head,
    param_shapes,
)

__all__ = [
    "Encoder",
    "EmbeddingNodes",
    "check_images",
    "embed",
    "encode",
    "init_params",
    "match_head",
    "param_shapes",
]
