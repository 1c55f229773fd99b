"""Score-level metrics: nothing here touches a model."""
from collections import Counter
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import kendalltau

from application.core.errors import DegenerateInput, NoPositives, WrongDimensionality

REJECT = None
VoteRule = Literal["majority", "plurality"]


def average_precision(scores, labels) -> float:
    """Non-interpolated AP; equal scores keep their input order."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.shape} scores against {labels.shape} labels")
    if not labels.any():
        raise NoPositives("average precision needs at least one positive")
    ranked = labels[np.argsort(-scores, kind="stable")]
    hits = np.cumsum(ranked)
    ranks = np.flatnonzero(ranked) + 1
    return float(np.mean(hits[ranked] / ranks))


def kendall_tau(bin_index, metric) -> float:
    """Tie-corrected tau-b, negated so that metric falling with uncertainty gives +1.

    NaN metric entries (bins without a defined value) are dropped first.
    """
    x = np.asarray(bin_index, dtype=np.float64)
    y = np.asarray(metric, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("bin_index and metric must have equal lengths")
    keep = ~np.isnan(y)
    x, y = x[keep], y[keep]
    if len(x) < 2:
        raise DegenerateInput(f"need at least two defined values, got {len(x)}")
    tau = kendalltau(x, y, variant="b").statistic
    if np.isnan(tau):
        raise DegenerateInput("all values are tied")
    return float(-tau)


def assign_bins(values, n_bins: int, rule: Literal["equal_count", "equal_width"] = "equal_count") -> np.ndarray:
    """Bin index per value, bins ordered by increasing value.

    equal_count partitions the rank order so bin sizes differ by at most one;
    equal_width splits [min, max] into equal intervals and may leave bins empty.
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    if rule == "equal_count":
        bins = np.empty(n, dtype=np.int64)
        bins[np.argsort(values, kind="stable")] = (np.arange(n) * n_bins) // max(n, 1)
        return bins
    low, high = (values.min(), values.max()) if n else (0.0, 0.0)
    if high == low:
        return np.zeros(n, dtype=np.int64)
    edges = np.linspace(low, high, n_bins + 1)
    return np.clip(np.digitize(values, edges[1:-1], right=False), 0, n_bins - 1)


def per_bin_average_precision(bins: np.ndarray, scores, labels, n_bins: int) -> np.ndarray:
    """AP within each bin; NaN where a bin is empty or has no positive."""
    scores, labels = np.asarray(scores), np.asarray(labels)
    out = np.full(n_bins, np.nan)
    for b in range(n_bins):
        member = bins == b
        if labels[member].any():
            out[b] = average_precision(scores[member], labels[member])
    return out


def per_bin_mean(bins: np.ndarray, values, n_bins: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    counts = np.bincount(bins, minlength=n_bins)
    sums = np.bincount(bins, weights=values, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


# ============= KNN voting =============
def knn_vote(neighbor_classes: Sequence[int], rule: VoteRule = "majority") -> Optional[int]:
    """Class voted by neighbours listed best match first; REJECT when majority fails."""
    if len(neighbor_classes) == 0:
        raise ValueError("no neighbours to vote")
    counts = Counter(int(c) for c in neighbor_classes)
    if rule == "majority":
        winner, votes = counts.most_common(1)[0]
        return winner if votes > len(neighbor_classes) / 2 else REJECT
    top = max(counts.values())
    # ties go to the tied class holding the best-ranked neighbour
    return next(int(c) for c in neighbor_classes if counts[int(c)] == top)


def knn_votes(neighbor_classes: np.ndarray, rule: VoteRule = "majority") -> np.ndarray:
    """Row-wise knn_vote over a (P, k) neighbour matrix; REJECT becomes -1."""
    out = np.empty(len(neighbor_classes), dtype=np.int64)
    for i, row in enumerate(neighbor_classes):
        vote = knn_vote(row, rule)
        out[i] = -1 if vote is REJECT else vote
    return out


# ============= Latent organisation (D = 1) =============
def latent_order_metrics(centroids, classes) -> Tuple[int, float]:
    """Adjacent-share count and mean run length of 2-digit classes sorted by 1-D centroid.

    A pair of neighbours shares when the classes agree in the ones or the tens
    digit. A run is a maximal chain of sharing neighbours; its length counts classes.
    """
    centroids = np.asarray(centroids, dtype=np.float64)
    if centroids.ndim == 2:
        if centroids.shape[1] != 1:
            raise WrongDimensionality(f"latent organisation needs 1-D embeddings, got D={centroids.shape[1]}")
        centroids = centroids[:, 0]
    elif centroids.ndim != 1:
        raise WrongDimensionality(f"unexpected centroid array of shape {centroids.shape}")
    classes = np.asarray(classes, dtype=np.int64)
    if len(classes) != len(centroids):
        raise ValueError("one centroid per class is required")

    ordered = classes[np.argsort(centroids, kind="stable")]
    tens, ones = ordered // 10, ordered % 10
    shares = (tens[1:] == tens[:-1]) | (ones[1:] == ones[:-1])

    runs, current = [], 0
    for share in shares:
        if share:
            current += 1
        elif current:
            runs.append(current + 1)
            current = 0
    if current:
        runs.append(current + 1)
    return int(shares.sum()), float(np.mean(runs)) if runs else 0.0
