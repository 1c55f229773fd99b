"""Differentiable versions of the match probability, KL and VIB objective.

These build nodes on a `CompGraph`. Noise is always supplied from outside
so that a given draw can be replayed exactly (finite-difference checks,
resumed training).
"""
from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np

from application.models import EmbeddingDistribution, MatchHead, TrainConfig
from application.services.autodiff import CompGraph, Node, ops
from application.services.encoder import EmbeddingNodes
from application.services.encoder.encoder import A_RAW, B
from application.services.hib.functional import KL_SAMPLES, PROB_CLAMP, stratified_components

HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


@dataclass(frozen=True, eq=False)
class NoiseDraw:
    """Standard-normal noise for one training step.

    `eps` is (B, K, D) with one sample set per image, or (P, 2, K, D) with a
    fresh set per pair endpoint. `eps_kl` is (B, K_kl, D) for mixture KL.
    """
    eps:        Optional[np.ndarray]
    eps_kl:     Optional[np.ndarray]
    per_pair:   bool = False


def draw_noise(
    rng:        np.random.Generator,
    config:     TrainConfig,
    batch_size: int,
    n_pairs:    int,
) -> NoiseDraw:
    enc = config.encoder
    if not enc.stochastic:
        return NoiseDraw(eps=None, eps_kl=None)
    k, dim = config.num_samples, enc.embed_dim
    if config.resample_per_pair:
        eps = rng.standard_normal((n_pairs, 2, k, dim))
    else:
        eps = rng.standard_normal((batch_size, k, dim))
    eps_kl = rng.standard_normal((batch_size, config.kl_samples, dim)) if enc.n_components > 1 else None
    return NoiseDraw(eps=eps, eps_kl=eps_kl, per_pair=config.resample_per_pair)


# ============= Building blocks =============
def sample_nodes(mu: Node, sigma: Node, eps: np.ndarray) -> Node:
    """(B, K, D) reparameterized draws from (B, C, D) components, stratified over C."""
    source = stratified_components(mu.shape[1], eps.shape[1])
    return ops.reparameterize(ops.take(mu, source, axis=1), ops.take(sigma, source, axis=1), eps)


def match_prob_nodes(s1: Node, s2: Node, a_raw: Node, b: Node) -> Node:
    """(P,) Monte-Carlo match probability between paired (P, K, D) sample sets."""
    n, k, dim = s1.shape
    diff = ops.reshape(s1, (n, k, 1, dim)) - ops.reshape(s2, (n, 1, s2.shape[1], dim))
    distance = ops.sqrt(ops.sum(ops.square(diff), axis=-1))
    logits = b - ops.softplus(a_raw) * distance
    return ops.mean(ops.sigmoid(logits), axis=(1, 2))


def point_match_prob_nodes(z1: Node, z2: Node, a_raw: Node, b: Node) -> Node:
    distance = ops.sqrt(ops.sum(ops.square(z1 - z2), axis=-1))
    return ops.sigmoid(b - ops.softplus(a_raw) * distance)


def soft_contrastive_nodes(p: Node, labels: np.ndarray) -> Node:
    p = ops.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    labels = np.asarray(labels, dtype=np.float64)
    return -(labels * ops.log(p) + (1.0 - labels) * ops.log(1.0 - p))


def hard_contrastive_nodes(z1: Node, z2: Node, labels: np.ndarray, margin: float) -> Node:
    labels = np.asarray(labels, dtype=np.float64)
    distance = ops.sqrt(ops.sum(ops.square(z1 - z2), axis=-1))
    hinge = ops.relu(margin - distance)
    return labels * ops.square(distance) + (1.0 - labels) * ops.square(hinge)


def kl_nodes(mu: Node, sigma: Node, eps_kl: Optional[np.ndarray]) -> Node:
    """(B,) KL(p(z|x) || N(0, I)); closed form for C = 1, stratified Monte Carlo otherwise."""
    if mu.shape[1] == 1:
        terms = ops.square(mu) + ops.square(sigma) - 1.0 - 2.0 * ops.log(sigma)
        return ops.scale(ops.sum(terms, axis=(1, 2)), 0.5)

    batch, n_components, dim = mu.shape
    z = sample_nodes(mu, sigma, eps_kl)
    k = z.shape[1]
    standardized = (ops.reshape(z, (batch, k, 1, dim)) - ops.reshape(mu, (batch, 1, n_components, dim))) \
        / ops.reshape(sigma, (batch, 1, n_components, dim))
    log_sigma = ops.reshape(ops.log(sigma), (batch, 1, n_components, dim))
    per_component = ops.sum(ops.scale(ops.square(standardized), -0.5) - log_sigma, axis=-1)
    log_p = ops.logsumexp(per_component, axis=-1) - np.log(n_components)
    # the Gaussian normalisers of p and r cancel
    log_r = ops.scale(ops.sum(ops.square(z), axis=-1), -0.5)
    return ops.mean(log_p - log_r, axis=1)


# ============= Batch objective =============
def batch_objective(
    config:     TrainConfig,
    nodes:      EmbeddingNodes,
    a_raw:      Node,
    b:          Node,
    left:       np.ndarray,
    right:      np.ndarray,
    labels:     np.ndarray,
    noise:      NoiseDraw,
) -> Dict[str, Node]:
    """Mean pair loss over a batch plus diagnostics.

    Outputs: `loss` (scalar), `kl` (mean per-image KL), `p` (per-pair match probability).
    """
    g = nodes.mu.graph
    if nodes.sigma is None:
        batch, _, dim = nodes.mu.shape
        z = ops.reshape(nodes.mu, (batch, dim))
        z1, z2 = ops.take(z, left), ops.take(z, right)
        p = point_match_prob_nodes(z1, z2, a_raw, b)
        if config.loss == "hard":
            per_pair = hard_contrastive_nodes(z1, z2, labels, config.margin)
        else:
            per_pair = soft_contrastive_nodes(p, labels)
        return {"loss": ops.mean(per_pair), "kl": g.constant(0.0), "p": p}

    mu, sigma = nodes.mu, nodes.sigma
    if noise.per_pair:
        s1 = sample_nodes(ops.take(mu, left), ops.take(sigma, left), noise.eps[:, 0])
        s2 = sample_nodes(ops.take(mu, right), ops.take(sigma, right), noise.eps[:, 1])
    else:
        samples = sample_nodes(mu, sigma, noise.eps)
        s1, s2 = ops.take(samples, left), ops.take(samples, right)
    p = match_prob_nodes(s1, s2, a_raw, b)
    contrastive = ops.mean(soft_contrastive_nodes(p, labels))

    kl = kl_nodes(mu, sigma, noise.eps_kl)
    loss = contrastive
    if config.beta > 0:
        pair_kl = ops.take(kl, left) + ops.take(kl, right)
        loss = contrastive + config.beta * ops.mean(pair_kl)
    return {"loss": loss, "kl": ops.mean(kl), "p": p}


# ============= Two-distribution objective =============
def _as_nodes(g: CompGraph, leaves: Mapping[str, Node], prefix: str, kind: str) -> EmbeddingNodes:
    mu = leaves[f"{prefix}.mu"]
    mu = ops.reshape(mu, (1,) + mu.shape)
    if kind == "point":
        return EmbeddingNodes(kind=kind, mu=mu, sigma=None)
    sigma = leaves[f"{prefix}.sigma"]
    return EmbeddingNodes(kind=kind, mu=mu, sigma=ops.reshape(sigma, (1,) + sigma.shape))


def vib_emb_graph(
    d1:             EmbeddingDistribution,
    d2:             EmbeddingDistribution,
    match_label:    int,
    head:           MatchHead,
    beta:           float,
    k:              int,
    rng:            np.random.Generator,
    k_kl:           int = KL_SAMPLES,
):
    """Graph of the pair loss with mu, sigma, a_raw and b as parameters.

    Returns (graph, context); `graph.forward(**context)` replays the same noise.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if d1.kind != d2.kind or d1.mu.shape != d2.mu.shape:
        raise ValueError("both embeddings must share kind and shape")
    params = {"x1.mu": d1.mu, "x2.mu": d2.mu, A_RAW: np.array(head.a_raw), B: np.array(head.b)}
    if d1.kind != "point":
        params.update({"x1.sigma": d1.sigma, "x2.sigma": d2.sigma})
    stochastic = d1.kind != "point"
    dim = d1.dim
    context = {
        "eps": rng.standard_normal((2, k, dim)) if stochastic else None,
        "eps_kl": rng.standard_normal((2, k_kl, dim)) if stochastic and d1.n_components > 1 else None,
    }

    def program(g: CompGraph, leaves, eps, eps_kl):
        n1 = _as_nodes(g, leaves, "x1", d1.kind)
        n2 = _as_nodes(g, leaves, "x2", d2.kind)
        a_raw, b = leaves[A_RAW], leaves[B]
        if not stochastic:
            p = point_match_prob_nodes(ops.reshape(n1.mu, (1, dim)), ops.reshape(n2.mu, (1, dim)), a_raw, b)
            return {"loss": ops.sum(soft_contrastive_nodes(p, np.array([match_label]))), "p": ops.sum(p)}
        s1 = sample_nodes(n1.mu, n1.sigma, eps[0:1])
        s2 = sample_nodes(n2.mu, n2.sigma, eps[1:2])
        p = match_prob_nodes(s1, s2, a_raw, b)
        loss = ops.sum(soft_contrastive_nodes(p, np.array([match_label])))
        if beta > 0:
            kl1 = kl_nodes(n1.mu, n1.sigma, None if eps_kl is None else eps_kl[0:1])
            kl2 = kl_nodes(n2.mu, n2.sigma, None if eps_kl is None else eps_kl[1:2])
            loss = loss + beta * ops.sum(kl1 + kl2)
        return {"loss": loss, "p": ops.sum(p)}

    return CompGraph(program, parameters=params), context
