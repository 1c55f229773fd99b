"""Model-level evaluation: verification, KNN identification and uncertainty binning."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from application.core.errors import DegenerateInput, GalleryTooSmall
from application.core.logging import get_logger
from application.models import (
    EmbeddingBatch,
    EmbeddingDistribution,
    EvalConfig,
    ImageCollection,
    MatchHead,
    NDigitDataset,
)
from application.services.encoder import Encoder
from application.services.evaluation.metrics import (
    VoteRule,
    assign_bins,
    average_precision,
    kendall_tau,
    knn_vote,
    knn_votes,
    latent_order_metrics,
    per_bin_average_precision,
    per_bin_mean,
)
from application.services.evaluation.report import EvalReport, KnnRow, LatentOrder, Stat, VerificationRow
from application.services.hib import (
    cross_match_prob,
    draw_samples,
    kl_batch,
    match_prob_mc,
    pair_match_prob,
    self_mismatch_batch,
)
from application.utils import derive_rng, derive_seed, progress_bar

logger = get_logger(__name__)

Condition = Literal["clean", "corrupt"]
KNN_CONDITIONS: Tuple[Tuple[Condition, Condition], ...] = (
    ("clean", "clean"),
    ("clean", "corrupt"),
    ("corrupt", "clean"),
)


@dataclass(frozen=True, eq=False)
class EmbeddedSet:
    """Encoded test twin; row i is the embedding of composed test image i."""
    condition:  str
    embeddings: EmbeddingBatch
    class_ids:  np.ndarray

    def __len__(self) -> int:
        return len(self.class_ids)


@dataclass(frozen=True, eq=False)
class EvalPairSet:
    left:       np.ndarray
    right:      np.ndarray
    labels:     np.ndarray
    condition:  str


def embed_collection(
    encoder:        Encoder,
    images:         ImageCollection,
    condition:      str,
    chunk_size:     int = 256,
    show_progress:  bool = False,
) -> EmbeddedSet:
    parts = []
    starts = range(0, len(images), chunk_size)
    for start in progress_bar(starts, desc=f"Embedding {condition}", unit="chunk", enabled=show_progress):
        index = np.arange(start, min(start + chunk_size, len(images)))
        parts.append(encoder.encode(images.batch(index)))
    return EmbeddedSet(condition=condition, embeddings=EmbeddingBatch.concatenate(parts), class_ids=images.class_ids)


def sample_eval_pairs(class_ids: np.ndarray, n_pairs: int, rng: np.random.Generator, condition: str = "") -> EvalPairSet:
    """Pairs of distinct images, half sharing a class, half not."""
    class_ids = np.asarray(class_ids)
    classes, inverse, counts = np.unique(class_ids, return_inverse=True, return_counts=True)
    members = np.argsort(inverse, kind="stable")
    offsets = np.concatenate([[0], np.cumsum(counts)])
    n_pos = n_pairs // 2
    n_neg = n_pairs - n_pos

    eligible = np.flatnonzero(counts[inverse] >= 2)
    if n_pos and len(eligible) == 0:
        raise DegenerateInput("no class has two images; positive pairs are impossible")
    if n_neg and len(classes) < 2:
        raise DegenerateInput("a single class cannot produce negative pairs")

    pos_left = rng.choice(eligible, size=n_pos) if n_pos else np.zeros(0, dtype=np.int64)
    cls = inverse[pos_left]
    position = np.empty(len(class_ids), dtype=np.int64)
    position[members] = np.arange(len(class_ids)) - offsets[inverse[members]]
    # uniform partner among the other members of the same class
    step = 1 + (rng.random(n_pos) * (counts[cls] - 1)).astype(np.int64)
    pos_right = members[offsets[cls] + (position[pos_left] + step) % counts[cls]]

    neg_left = rng.integers(0, len(class_ids), size=n_neg)
    neg_right = rng.integers(0, len(class_ids), size=n_neg)
    clash = class_ids[neg_left] == class_ids[neg_right]
    while clash.any():
        neg_right[clash] = rng.integers(0, len(class_ids), size=int(clash.sum()))
        clash = class_ids[neg_left] == class_ids[neg_right]

    left = np.concatenate([pos_left, neg_left]).astype(np.int64)
    right = np.concatenate([pos_right, neg_right]).astype(np.int64)
    labels = np.concatenate([np.ones(n_pos, dtype=np.int64), np.zeros(n_neg, dtype=np.int64)])
    order = rng.permutation(n_pairs)
    return EvalPairSet(left=left[order], right=right[order], labels=labels[order], condition=condition)


def _nan_to_none(values) -> List[Optional[float]]:
    return [None if np.isnan(v) else float(v) for v in values]


def _mean_curve(curves: Sequence[np.ndarray]) -> List[Optional[float]]:
    stacked = np.vstack(curves)
    defined = ~np.isnan(stacked)
    with np.errstate(invalid="ignore"):
        mean = np.where(defined.any(axis=0), np.nansum(stacked, axis=0) / np.maximum(defined.sum(axis=0), 1), np.nan)
    return _nan_to_none(mean)


@dataclass(frozen=True, eq=False)
class VerificationRepeat:
    ap:     float
    tau:    Optional[float]
    curve:  np.ndarray


@dataclass(frozen=True, eq=False)
class KnnRepeat:
    majority:   float
    plurality:  float
    tau:        Optional[float]
    nn_tau:     Optional[float]
    curve:      np.ndarray


class Evaluator:
    """Evaluates one trained encoder on the test twins of an N-digit dataset.

    Embeddings are computed once; every repeat draws its own sampling noise,
    pairs and probe subset from a stream derived from the eval seed and the
    repeat number, so results do not depend on the thread count.
    """

    def __init__(
        self,
        encoder:        Encoder,
        ds:             NDigitDataset,
        config:         EvalConfig,
        head:           Optional[MatchHead] = None,
        show_progress:  bool = False,
    ):
        self.encoder = encoder
        self.ds = ds
        self.config = config
        self.head = head or encoder.head
        self.show_progress = show_progress
        self._sets: Dict[str, EmbeddedSet] = {}

    @property
    def stochastic(self) -> bool:
        return self.encoder.config.stochastic

    def embedded(self, condition: Condition) -> EmbeddedSet:
        if condition not in self._sets:
            self._sets[condition] = embed_collection(
                self.encoder, self.ds.test(condition), condition, show_progress=self.show_progress,
            )
        return self._sets[condition]

    def _uncertainty(self, emb: EmbeddingBatch, rng: np.random.Generator) -> np.ndarray:
        return self_mismatch_batch(emb, self.head, self.config.num_samples, rng)

    def _binned_tau(self, uncertainty: np.ndarray, curve_fn) -> Tuple[Optional[float], np.ndarray]:
        """Kendall tau between bin index and per-bin metric; None when uncertainty is constant."""
        n_bins = self.config.n_bins
        bins = assign_bins(uncertainty, n_bins, self.config.bin_rule)
        curve = curve_fn(bins, n_bins)
        if np.ptp(uncertainty) == 0:
            return None, curve
        try:
            return kendall_tau(np.arange(n_bins), curve), curve
        except DegenerateInput:
            return None, curve

    # ============= Verification =============
    def verification_repeat(self, condition: Condition, rng: np.random.Generator) -> VerificationRepeat:
        emb_set = self.embedded(condition)
        pairs = sample_eval_pairs(emb_set.class_ids, self.config.n_pairs, rng, condition)
        emb = emb_set.embeddings
        k = self.config.num_samples
        scores = pair_match_prob(
            draw_samples(emb.take(pairs.left), k, rng),
            draw_samples(emb.take(pairs.right), k, rng),
            self.head,
        )
        ap = average_precision(scores, pairs.labels)

        eta = self._uncertainty(emb, rng)
        pair_eta = 0.5 * (eta[pairs.left] + eta[pairs.right])
        tau, curve = self._binned_tau(
            pair_eta, lambda bins, n: per_bin_average_precision(bins, scores, pairs.labels, n),
        )
        return VerificationRepeat(ap=ap, tau=tau, curve=curve)

    # ============= KNN identification =============
    def neighbours(
        self,
        gallery:    EmbeddedSet,
        probes:     EmbeddingBatch,
        probe_idx:  np.ndarray,
        rng:        np.random.Generator,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Gallery rows ranked best match first, (P, k), plus each probe's nearest mean distance.

        The probe's own image and its twin share a row index with the gallery and are excluded.
        """
        k_nn = self.config.knn_k
        if len(gallery) - 1 < k_nn:
            raise GalleryTooSmall(f"gallery of {len(gallery)} cannot supply {k_nn} neighbours")
        g_means = gallery.embeddings.mu.mean(axis=1)
        p_means = probes.mu.mean(axis=1)
        sq = np.sum(p_means ** 2, axis=1)[:, None] + np.sum(g_means ** 2, axis=1)[None, :] - 2.0 * p_means @ g_means.T
        distance = np.sqrt(np.maximum(sq, 0.0))
        if self.config.knn_ranking == "mean_distance":
            scores = -distance
        else:
            k = self.config.num_samples
            scores = cross_match_prob(
                draw_samples(probes, k, rng), draw_samples(gallery.embeddings, k, rng), self.head,
            )
        rows = np.arange(len(probe_idx))
        scores[rows, probe_idx] = -np.inf
        distance[rows, probe_idx] = np.inf
        ranked = np.argsort(-scores, axis=1, kind="stable")[:, :k_nn]
        return ranked, distance.min(axis=1)

    def knn_repeat(self, gallery_condition: Condition, probe_condition: Condition, rng: np.random.Generator) -> KnnRepeat:
        gallery = self.embedded(gallery_condition)
        probe_set = self.embedded(probe_condition)
        n_probes = min(self.config.knn_probes, len(probe_set))
        probe_idx = np.sort(rng.choice(len(probe_set), size=n_probes, replace=False))
        probes = probe_set.embeddings.take(probe_idx)
        truth = probe_set.class_ids[probe_idx]

        ranked, nn_distance = self.neighbours(gallery, probes, probe_idx, rng)
        neighbour_classes = gallery.class_ids[ranked]
        majority_correct = knn_votes(neighbour_classes, "majority") == truth
        plurality_correct = knn_votes(neighbour_classes, "plurality") == truth

        eta = self._uncertainty(probes, rng)
        tau, curve = self._binned_tau(eta, lambda bins, n: per_bin_mean(bins, majority_correct, n))
        nn_tau, _ = self._binned_tau(nn_distance, lambda bins, n: per_bin_mean(bins, majority_correct, n))
        return KnnRepeat(
            majority=float(majority_correct.mean()),
            plurality=float(plurality_correct.mean()),
            tau=tau,
            nn_tau=nn_tau,
            curve=curve,
        )

    # ============= Full report =============
    def _repeat_rng(self, repeat: int, task: str) -> np.random.Generator:
        return derive_rng(derive_seed(self.config.seed, f"repeat-{repeat}"), task)

    def run_repeat(self, repeat: int) -> Tuple[Dict[str, VerificationRepeat], Dict[Tuple[str, str], KnnRepeat]]:
        verification = {
            c: self.verification_repeat(c, self._repeat_rng(repeat, f"verification/{c}"))
            for c in ("clean", "corrupt")
        }
        knn = {
            (g, p): self.knn_repeat(g, p, self._repeat_rng(repeat, f"knn/{g}/{p}"))
            for g, p in KNN_CONDITIONS
        }
        logger.debug(f"Repeat {repeat}: AP clean {verification['clean'].ap:.4f}, corrupt {verification['corrupt'].ap:.4f}")
        return verification, knn

    def latent_order(self) -> Optional[LatentOrder]:
        enc = self.encoder.config
        if enc.embed_dim != 1 or enc.n_digits != 2:
            return None
        clean = self.embedded("clean")
        classes = np.unique(clean.class_ids)
        means = clean.embeddings.mu.mean(axis=1)[:, 0]
        centroids = np.array([means[clean.class_ids == c].mean() for c in classes])
        count, run = latent_order_metrics(centroids, classes)
        return LatentOrder(adjacent_share_count=count, mean_run_length=run)

    def evaluate(self, checkpoint_step: int = 0) -> EvalReport:
        for condition in ("clean", "corrupt"):
            self.embedded(condition)
        repeats = range(self.config.repeats)
        bar = progress_bar(total=len(repeats), desc="Evaluating", unit="repeat", enabled=self.show_progress)
        with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
            results = []
            for result in pool.map(self.run_repeat, repeats):
                results.append(result)
                bar.update(1)
        bar.close()

        verification_rows = []
        for c in ("clean", "corrupt"):
            runs = [v[c] for v, _ in results]
            taus = [r.tau for r in runs]
            verification_rows.append(VerificationRow(
                condition=c,
                ap=Stat.of([r.ap for r in runs]),
                ap_tau=Stat.of(taus),
                degenerate=all(t is None for t in taus),
                bin_curve=_mean_curve([r.curve for r in runs]),
            ))
        knn_rows = []
        for g, p in KNN_CONDITIONS:
            runs = [k[(g, p)] for _, k in results]
            taus = [r.tau for r in runs]
            knn_rows.append(KnnRow(
                gallery=g,
                probe=p,
                majority=Stat.of([r.majority for r in runs]),
                plurality=Stat.of([r.plurality for r in runs]),
                accuracy_tau=Stat.of(taus),
                nn_distance_tau=Stat.of([r.nn_tau for r in runs]),
                degenerate=all(t is None for t in taus),
                bin_curve=_mean_curve([r.curve for r in runs]),
            ))

        mean_sigma, mean_kl = {}, {}
        for c in ("clean", "corrupt"):
            emb = self.embedded(c).embeddings
            stochastic = emb.sigma is not None
            mean_sigma[c] = float(emb.sigma.mean()) if stochastic else None
            mean_kl[c] = float(kl_batch(emb, derive_rng(self.config.seed, f"kl/{c}")).mean()) if stochastic else None

        enc = self.encoder.config
        report = EvalReport(
            model=enc.label,
            representation=enc.representation,
            n_digits=enc.n_digits,
            embed_dim=enc.embed_dim,
            checkpoint_step=checkpoint_step,
            eval=self.config,
            verification=verification_rows,
            knn=knn_rows,
            mean_sigma=mean_sigma,
            mean_kl=mean_kl,
            latent_order=self.latent_order(),
        )
        logger.info(
            f"{report.model}: AP clean {verification_rows[0].ap.mean:.4f} / corrupt {verification_rows[1].ap.mean:.4f}, "
            f"KNN corrupt gallery {report.knn_row('corrupt', 'clean').majority.mean:.4f}"
        )
        return report


# ============= Single-task entry points =============
def verification_eval(
    encoder:    Encoder,
    ds:         NDigitDataset,
    condition:  Condition,
    n_pairs:    int = 10_000,
    head:       Optional[MatchHead] = None,
    k:          int = 8,
    rng:        Optional[np.random.Generator] = None,
) -> float:
    config = EvalConfig(n_pairs=n_pairs, num_samples=k)
    evaluator = Evaluator(encoder, ds, config, head)
    return evaluator.verification_repeat(condition, rng or np.random.default_rng()).ap


def knn_classify(
    probe:      EmbeddingDistribution,
    gallery:    Sequence[Tuple[EmbeddingDistribution, int]],
    k_nn:       int,
    rule:       VoteRule,
    head:       MatchHead,
    k:          int,
    rng:        np.random.Generator,
) -> Optional[int]:
    """Class of one probe from gallery entries ranked by match probability; REJECT if majority fails."""
    if len(gallery) < k_nn:
        raise GalleryTooSmall(f"gallery of {len(gallery)} cannot supply {k_nn} neighbours")
    scores = np.array([match_prob_mc(probe, dist, head, k, rng) for dist, _ in gallery])
    order = np.argsort(-scores, kind="stable")[:k_nn]
    return knn_vote([gallery[i][1] for i in order], rule)


def knn_eval(
    encoder:            Encoder,
    ds:                 NDigitDataset,
    gallery_condition:  Condition,
    probe_condition:    Condition,
    rule:               VoteRule = "majority",
    config:             Optional[EvalConfig] = None,
    head:               Optional[MatchHead] = None,
    rng:                Optional[np.random.Generator] = None,
) -> float:
    evaluator = Evaluator(encoder, ds, config or EvalConfig(), head)
    result = evaluator.knn_repeat(gallery_condition, probe_condition, rng or np.random.default_rng())
    return result.majority if rule == "majority" else result.plurality


def uncertainty_correlation(
    encoder:    Encoder,
    ds:         NDigitDataset,
    task:       Literal["verification", "knn"],
    condition:  Condition,
    config:     Optional[EvalConfig] = None,
    head:       Optional[MatchHead] = None,
) -> Tuple[float, float, List[Optional[float]]]:
    """(tau mean, tau stddev, mean per-bin curve) over the configured repeats.

    For KNN the probes come from `condition` and the gallery is the clean twin.
    Raises DegenerateInput when the model's uncertainty is constant.
    """
    config = config or EvalConfig()
    evaluator = Evaluator(encoder, ds, config, head)
    taus, curves = [], []
    for r in range(config.repeats):
        rng = evaluator._repeat_rng(r, f"{task}/{condition}")
        if task == "verification":
            result = evaluator.verification_repeat(condition, rng)
        else:
            result = evaluator.knn_repeat("clean", condition, rng)
        if result.tau is None:
            raise DegenerateInput("uncertainty is constant across inputs")
        taus.append(result.tau)
        curves.append(result.curve)
    stat = Stat.of(taus)
    return stat.mean, stat.std, _mean_curve(curves)
