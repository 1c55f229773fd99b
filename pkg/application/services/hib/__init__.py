from .functional import (
    KL_SAMPLES,
    match_prob_point,
    soft_contrastive_loss,
    hard_contrastive_loss,
    stratified_components,
    sample,
    match_prob_mc,
    self_mismatch,
    kl_to_unit_gaussian,
    vib_emb_loss,
    draw_samples,
    pair_match_prob,
    cross_match_prob,
    self_mismatch_batch,
    kl_batch,
    log_det_sigma,
)
from .objective import NoiseDraw, batch_objective, draw_noise, kl_nodes, match_prob_nodes, vib_emb_graph

__all__ = [
    "KL_SAMPLES",
    # Closed form and Monte Carlo
    "match_prob_point",
    "soft_contrastive_loss",
    "hard_contrastive_loss",
    "stratified_components",
    "sample",
    "match_prob_mc",
    "self_mismatch",
    "kl_to_unit_gaussian",
    "vib_emb_loss",
    # Batched inference
    "draw_samples",
    "pair_match_prob",
    "cross_match_prob",
    "self_mismatch_batch",
    "kl_batch",
    "log_det_sigma",
    # Differentiable objective
    "NoiseDraw",
    "batch_objective",
    "draw_noise",
    "kl_nodes",
    "match_prob_nodes",
    "vib_emb_graph",
]
