from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from application.core.errors import ShapeMismatch
from application.core.logging import get_logger
from application.models import EmbeddingBatch, EncoderConfig, MatchHead
from application.models.embedding import inverse_softplus
from application.services.autodiff import CompGraph, Node, ops

logger = get_logger(__name__)

KERNEL = 5
A_RAW = "match.a_raw"
B = "match.b"


@dataclass(frozen=True)
class EmbeddingNodes:
    """Graph-side encoder output: mu and sigma are (B, C, D) nodes; sigma is None for points."""
    kind:   str
    mu:     Node
    sigma:  Optional[Node]


def param_shapes(config: EncoderConfig) -> Dict[str, Tuple[int, ...]]:
    c1, c2 = config.conv_channels
    shapes: Dict[str, Tuple[int, ...]] = {
        "conv1.w": (KERNEL, KERNEL, 1, c1),
        "conv1.b": (c1,),
        "conv2.w": (KERNEL, KERNEL, c1, c2),
        "conv2.b": (c2,),
    }
    branches = ["mu"] if config.representation == "point" else ["mu", "sigma"]
    for c in range(config.n_components):
        for branch in branches:
            shapes[f"head.{branch}.{c}.w"] = (config.feature_dim, config.embed_dim)
            shapes[f"head.{branch}.{c}.b"] = (config.embed_dim,)
    shapes[A_RAW] = ()
    shapes[B] = ()
    return shapes


def init_params(config: EncoderConfig, seed: int) -> Dict[str, np.ndarray]:
    """Weights uniform in +-sqrt(6 / fan_in); biases zero; a = 1 and b = 0 for the match head."""
    rng = np.random.default_rng(seed)
    params: Dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        if name == A_RAW:
            params[name] = np.array(inverse_softplus(1.0))
        elif name.endswith(".w"):
            fan_in = int(np.prod(shape[:-1]))
            bound = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            params[name] = np.zeros(shape)
    return params


def match_head(params: Mapping[str, np.ndarray]) -> MatchHead:
    return MatchHead(a_raw=float(params[A_RAW]), b=float(params[B]))


def embed(config: EncoderConfig, leaves: Mapping[str, Node], images: Node) -> EmbeddingNodes:
    """Shared stump (conv-relu-pool x2, flatten) branched into one linear layer per output."""
    h = ops.max_pool2d(ops.relu(ops.conv2d(images, leaves["conv1.w"], leaves["conv1.b"])))
    h = ops.max_pool2d(ops.relu(ops.conv2d(h, leaves["conv2.w"], leaves["conv2.b"])))
    features = ops.reshape(h, (h.shape[0], config.feature_dim))
    batch, dim = h.shape[0], config.embed_dim

    def branch(name: str, c: int) -> Node:
        out = ops.affine(features, leaves[f"head.{name}.{c}.w"], leaves[f"head.{name}.{c}.b"])
        return ops.reshape(out, (batch, 1, dim))

    components = range(config.n_components)
    mu = ops.concat([branch("mu", c) for c in components], axis=1)
    if config.representation == "point":
        return EmbeddingNodes(kind="point", mu=mu, sigma=None)
    raw = ops.concat([branch("sigma", c) for c in components], axis=1)
    sigma = ops.softplus(raw) + config.sigma_floor
    return EmbeddingNodes(kind=config.representation, mu=mu, sigma=sigma)


def check_images(config: EncoderConfig, images: np.ndarray) -> np.ndarray:
    """Normalise to (B, 28, 28N, 1) or raise ShapeMismatch."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[..., None]
    if images.ndim != 4 or images.shape[1:] != (28, config.image_width, 1):
        raise ShapeMismatch(f"expected images of shape (B, 28, {config.image_width}), got {images.shape}")
    return images


class Encoder:
    """Frozen-parameter inference wrapper around the encoder graph."""

    def __init__(self, config: EncoderConfig, params: Mapping[str, np.ndarray]):
        missing = set(param_shapes(config)) - set(params)
        if missing:
            raise ShapeMismatch(f"parameters missing: {', '.join(sorted(missing))}")
        self.config = config
        self.params = {name: np.asarray(value) for name, value in params.items()}

    @property
    def head(self) -> MatchHead:
        return match_head(self.params)

    def _program(self, g: CompGraph, leaves: Mapping[str, Node]):
        nodes = embed(self.config, leaves, leaves["images"])
        outputs = {"mu": nodes.mu}
        if nodes.sigma is not None:
            outputs["sigma"] = nodes.sigma
        return outputs

    def encode(self, images: np.ndarray, chunk_size: int = 256) -> EmbeddingBatch:
        """Map images (B, 28, 28N[, 1]) to their embedding distributions."""
        images = check_images(self.config, images)
        graph = CompGraph(self._program, parameters=self.params)
        mus, sigmas = [], []
        for start in range(0, len(images), chunk_size):
            out = graph.forward({"images": images[start:start + chunk_size]})
            mus.append(out["mu"])
            if "sigma" in out:
                sigmas.append(out["sigma"])
        kind = self.config.representation
        empty = np.zeros((0, self.config.n_components, self.config.embed_dim))
        return EmbeddingBatch(
            kind=kind,
            mu=np.concatenate(mus) if mus else empty,
            sigma=None if kind == "point" else (np.concatenate(sigmas) if sigmas else empty),
        )


def encode(params: Mapping[str, np.ndarray], config: EncoderConfig, batch: np.ndarray) -> EmbeddingBatch:
    return Encoder(config, params).encode(batch)
