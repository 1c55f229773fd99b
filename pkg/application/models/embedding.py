from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from application.core.errors import NonPositiveSigma

Kind = Literal["point", "gaussian", "mog"]


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y: float) -> float:
    return float(np.log(np.expm1(y)))


@dataclass(frozen=True, eq=False)
class EmbeddingDistribution:
    """Point, diagonal Gaussian or uniform-weight diagonal MoG over R^D.

    Components are stacked on the first axis: mu and sigma are (C, D). A point
    embedding has C = 1 and no sigma.
    """
    kind:   Kind
    mu:     np.ndarray
    sigma:  Optional[np.ndarray] = None

    def __post_init__(self):
        mu = np.atleast_2d(np.asarray(self.mu, dtype=np.float64))
        object.__setattr__(self, "mu", mu)
        if self.kind == "point":
            if mu.shape[0] != 1:
                raise ValueError("point embeddings have a single location")
            return
        if self.sigma is None:
            raise ValueError(f"{self.kind} embeddings need sigma")
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64))
        if sigma.shape != mu.shape:
            raise ValueError(f"sigma shape {sigma.shape} does not match mu shape {mu.shape}")
        if not np.all(sigma > 0):
            raise NonPositiveSigma("every sigma must be strictly positive")
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def point(cls, z) -> "EmbeddingDistribution":
        return cls("point", np.asarray(z, dtype=np.float64)[None, :])

    @classmethod
    def gaussian(cls, mu, sigma) -> "EmbeddingDistribution":
        return cls("gaussian", np.asarray(mu, dtype=np.float64)[None, :], np.asarray(sigma, dtype=np.float64)[None, :])

    @classmethod
    def mixture(cls, mus, sigmas) -> "EmbeddingDistribution":
        return cls("mog", np.asarray(mus, dtype=np.float64), np.asarray(sigmas, dtype=np.float64))

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    @property
    def n_components(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True, eq=False)
class EmbeddingBatch:
    """Encoder output for a batch: mu and sigma are (B, C, D); sigma is None for points."""
    kind:   Kind
    mu:     np.ndarray
    sigma:  Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.mu.shape[0]

    @property
    def dim(self) -> int:
        return self.mu.shape[2]

    @property
    def n_components(self) -> int:
        return self.mu.shape[1]

    def __getitem__(self, i: int) -> EmbeddingDistribution:
        return EmbeddingDistribution(
            kind=self.kind,
            mu=self.mu[i],
            sigma=None if self.sigma is None else self.sigma[i],
        )

    def take(self, indices: np.ndarray) -> "EmbeddingBatch":
        return EmbeddingBatch(
            kind=self.kind,
            mu=self.mu[indices],
            sigma=None if self.sigma is None else self.sigma[indices],
        )

    @staticmethod
    def concatenate(parts: list["EmbeddingBatch"]) -> "EmbeddingBatch":
        kind = parts[0].kind
        return EmbeddingBatch(
            kind=kind,
            mu=np.concatenate([p.mu for p in parts]),
            sigma=None if kind == "point" else np.concatenate([p.sigma for p in parts]),
        )


@dataclass(frozen=True)
class MatchHead:
    """Scalars of the match probability sigma(-a * d + b), with a = softplus(a_raw) > 0."""
    a_raw:  float = inverse_softplus(1.0)
    b:      float = 0.0

    @property
    def a(self) -> float:
        return float(softplus(self.a_raw))

    @classmethod
    def from_scale(cls, a: float, b: float = 0.0) -> "MatchHead":
        if a <= 0:
            raise ValueError("a must be positive")
        return cls(a_raw=inverse_softplus(a), b=b)


@dataclass(frozen=True, eq=False)
class SampleSet:
    samples:            np.ndarray      # (K, D)
    source_component:   np.ndarray      # (K,) int

    @property
    def k(self) -> int:
        return self.samples.shape[0]
