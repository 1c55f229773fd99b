"""Inference-side probability machinery on plain numpy arrays.

Single-distribution functions mirror the objects in `application.models`;
the `*_batch` variants work on `EmbeddingBatch` tensors and are what the
evaluation suite calls.
"""
import math
from typing import Optional

import numpy as np
from scipy.special import expit, logsumexp

from application.core.errors import DimMismatch, NonPositiveSigma, StratificationError
from application.models import EmbeddingBatch, EmbeddingDistribution, MatchHead, SampleSet

PROB_CLAMP = 1e-12
KL_SAMPLES = 32


# ============= Closed-form pieces =============
def match_prob_point(z1, z2, head: MatchHead) -> float:
    z1, z2 = np.asarray(z1, dtype=np.float64), np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape:
        raise DimMismatch(f"cannot compare embeddings of shape {z1.shape} and {z2.shape}")
    return float(expit(-head.a * np.linalg.norm(z1 - z2) + head.b))


def soft_contrastive_loss(p, match_label):
    """Binary cross-entropy on a match probability, clamped away from 0 and 1."""
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = np.where(np.asarray(match_label) == 1, -np.log(p), -np.log1p(-p))
    return float(loss) if loss.ndim == 0 else loss


def hard_contrastive_loss(z1, z2, match_label, margin: float):
    if margin <= 0:
        raise ValueError("margin must be positive")
    d = np.linalg.norm(np.asarray(z1, dtype=np.float64) - np.asarray(z2, dtype=np.float64), axis=-1)
    loss = np.where(np.asarray(match_label) == 1, d ** 2, np.maximum(margin - d, 0.0) ** 2)
    return float(loss) if loss.ndim == 0 else loss


# ============= Sampling =============
def stratified_components(n_components: int, k: int) -> np.ndarray:
    """Component index of each of k draws: k / C consecutive draws per component."""
    if k < 1:
        raise ValueError("at least one sample is required")
    if k % n_components:
        raise StratificationError(f"{k} samples cannot be split evenly over {n_components} components")
    return np.repeat(np.arange(n_components), k // n_components)


def sample(dist: EmbeddingDistribution, k: int, rng: np.random.Generator) -> SampleSet:
    """Reparameterized draws z = sigma * eps + mu, stratified over mixture components."""
    if dist.kind == "point":
        return SampleSet(samples=np.repeat(dist.mu, k, axis=0), source_component=np.zeros(k, dtype=np.int64))
    source = stratified_components(dist.n_components, k)
    eps = rng.standard_normal((k, dist.dim))
    return SampleSet(samples=dist.mu[source] + dist.sigma[source] * eps, source_component=source)


def _mean_sigmoid(s1: np.ndarray, s2: np.ndarray, head: MatchHead) -> float:
    d = np.linalg.norm(s1[:, None, :] - s2[None, :, :], axis=-1)
    probs = expit(-head.a * d + head.b)
    # order-independent sum keeps p(d1, d2) == p(d2, d1) bit for bit under shared noise
    return math.fsum(probs.ravel()) / probs.size


def match_prob_mc(
    d1:             EmbeddingDistribution,
    d2:             EmbeddingDistribution,
    head:           MatchHead,
    k:              int,
    rng:            Optional[np.random.Generator] = None,
    shared_seed:    Optional[int] = None,
) -> float:
    """Average sigmoid match over all k x k cross pairs of draws.

    With `shared_seed` both sample sets reuse one noise stream, which makes the
    estimate exactly symmetric in its arguments.
    """
    if d1.dim != d2.dim:
        raise DimMismatch(f"dimension {d1.dim} against {d2.dim}")
    if d1.kind == "point" and d2.kind == "point":
        return match_prob_point(d1.mu[0], d2.mu[0], head)
    if shared_seed is not None:
        s1 = sample(d1, k, np.random.default_rng(shared_seed))
        s2 = sample(d2, k, np.random.default_rng(shared_seed))
    else:
        if rng is None:
            raise ValueError("an rng or a shared_seed is required for stochastic embeddings")
        s1, s2 = sample(d1, k, rng), sample(d2, k, rng)
    return _mean_sigmoid(s1.samples, s2.samples, head)


def self_mismatch(dist: EmbeddingDistribution, head: MatchHead, k: int, rng: np.random.Generator) -> float:
    """eta = 1 - p(match | x, x) from two independent sample sets of one embedding."""
    if dist.kind == "point":
        return float(1.0 - expit(head.b))
    return 1.0 - _mean_sigmoid(sample(dist, k, rng).samples, sample(dist, k, rng).samples, head)


# ============= KL to the unit Gaussian =============
def _gaussian_kl(mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(mu ** 2 + sigma ** 2 - 1.0 - 2.0 * np.log(sigma), axis=-1)


def _log_mixture_density(z: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """ln p(z) for a uniform mixture; z is (..., K, D), mu and sigma are (..., C, D)."""
    diff = (z[..., :, None, :] - mu[..., None, :, :]) / sigma[..., None, :, :]
    per_component = np.sum(-0.5 * diff ** 2 - np.log(sigma[..., None, :, :]), axis=-1)
    return logsumexp(per_component, axis=-1) - np.log(mu.shape[-2]) - 0.5 * z.shape[-1] * np.log(2 * np.pi)


def _log_unit_density(z: np.ndarray) -> np.ndarray:
    return np.sum(-0.5 * z ** 2, axis=-1) - 0.5 * z.shape[-1] * np.log(2 * np.pi)


def kl_to_unit_gaussian(
    dist:   EmbeddingDistribution,
    rng:    Optional[np.random.Generator] = None,
    k_kl:   int = KL_SAMPLES,
) -> float:
    """Closed form for one component; stratified Monte Carlo for mixtures."""
    if dist.kind == "point":
        raise ValueError("KL to a density is undefined for point embeddings")
    if not np.all(dist.sigma > 0):
        raise NonPositiveSigma("sigma must be strictly positive")
    if dist.n_components == 1:
        return float(_gaussian_kl(dist.mu[0], dist.sigma[0]))
    if rng is None:
        raise ValueError("mixture KL needs an rng")
    z = sample(dist, k_kl, rng).samples
    return float(np.mean(_log_mixture_density(z, dist.mu, dist.sigma) - _log_unit_density(z)))


def vib_emb_loss(
    d1:             EmbeddingDistribution,
    d2:             EmbeddingDistribution,
    match_label:    int,
    head:           MatchHead,
    beta:           float,
    k:              int,
    rng:            np.random.Generator,
    k_kl:           int = KL_SAMPLES,
) -> float:
    if beta < 0:
        raise ValueError("beta must be non-negative")
    loss = soft_contrastive_loss(match_prob_mc(d1, d2, head, k, rng), match_label)
    if beta > 0 and d1.kind != "point":
        loss += beta * (kl_to_unit_gaussian(d1, rng, k_kl) + kl_to_unit_gaussian(d2, rng, k_kl))
    return float(loss)


# ============= Batched inference =============
def draw_samples(batch: EmbeddingBatch, k: int, rng: np.random.Generator) -> np.ndarray:
    """(B, K, D) stratified draws for every embedding in the batch."""
    if batch.kind == "point":
        return np.repeat(batch.mu, k, axis=1)
    source = stratified_components(batch.n_components, k)
    eps = rng.standard_normal((len(batch), k, batch.dim))
    return batch.mu[:, source] + batch.sigma[:, source] * eps


def pair_match_prob(s1: np.ndarray, s2: np.ndarray, head: MatchHead) -> np.ndarray:
    """Row-wise match probability between two (P, K, D) sample tensors."""
    d = np.linalg.norm(s1[:, :, None, :] - s2[:, None, :, :], axis=-1)
    return expit(-head.a * d + head.b).mean(axis=(1, 2))


def cross_match_prob(
    probes:     np.ndarray,
    gallery:    np.ndarray,
    head:       MatchHead,
    chunk_size: int = 8,
) -> np.ndarray:
    """(P, G) match probabilities between every probe and every gallery sample tensor."""
    n_probes, k, dim = probes.shape
    n_gallery, k2, _ = gallery.shape
    flat_gallery = gallery.reshape(n_gallery * k2, dim)
    gallery_sq = np.sum(flat_gallery ** 2, axis=1)
    out = np.empty((n_probes, n_gallery))
    for start in range(0, n_probes, chunk_size):
        chunk = probes[start:start + chunk_size].reshape(-1, dim)
        sq = np.sum(chunk ** 2, axis=1)[:, None] + gallery_sq[None, :] - 2.0 * chunk @ flat_gallery.T
        d = np.sqrt(np.maximum(sq, 0.0))
        probs = expit(-head.a * d + head.b).reshape(-1, k, n_gallery, k2)
        out[start:start + chunk_size] = probs.mean(axis=(1, 3))
    return out


def self_mismatch_batch(batch: EmbeddingBatch, head: MatchHead, k: int, rng: np.random.Generator) -> np.ndarray:
    if batch.kind == "point":
        return np.full(len(batch), 1.0 - expit(head.b))
    return 1.0 - pair_match_prob(draw_samples(batch, k, rng), draw_samples(batch, k, rng), head)


def kl_batch(batch: EmbeddingBatch, rng: Optional[np.random.Generator] = None, k_kl: int = KL_SAMPLES) -> np.ndarray:
    """Per-embedding KL to N(0, I); zeros for point embeddings."""
    if batch.kind == "point":
        return np.zeros(len(batch))
    if batch.n_components == 1:
        return _gaussian_kl(batch.mu[:, 0], batch.sigma[:, 0])
    if rng is None:
        raise ValueError("mixture KL needs an rng")
    z = draw_samples(batch, k_kl, rng)
    return np.mean(_log_mixture_density(z, batch.mu, batch.sigma) - _log_unit_density(z), axis=-1)


def log_det_sigma(batch: EmbeddingBatch) -> np.ndarray:
    """Volumetric spread: mean over components of sum_d ln sigma_d^2."""
    if batch.kind == "point":
        return np.zeros(len(batch))
    return np.mean(np.sum(2.0 * np.log(batch.sigma), axis=-1), axis=-1)
