from .metrics import (
    REJECT,
    average_precision,
    kendall_tau,
    assign_bins,
    per_bin_average_precision,
    per_bin_mean,
    knn_vote,
    knn_votes,
    latent_order_metrics,
)
from .report import EvalReport, KnnRow, LatentOrder, Stat, VerificationRow, flatten_report, write_report
from .tasks import (
    KNN_CONDITIONS,
    EmbeddedSet,
    EvalPairSet,
    Evaluator,
    embed_collection,
    knn_classify,
    knn_eval,
    sample_eval_pairs,
    uncertainty_correlation,
    verification_eval,
)
from .export import embed_scatter_export

__all__ = [
    # Metrics
    "REJECT",
    "average_precision",
    "kendall_tau",
    "assign_bins",
    "per_bin_average_precision",
    "per_bin_mean",
    "knn_vote",
    "knn_votes",
    "latent_order_metrics",
    # Report
    "EvalReport",
    "KnnRow",
    "LatentOrder",
    "Stat",
    "VerificationRow",
    "flatten_report",
    "write_report",
    # Tasks
    "KNN_CONDITIONS",
    "EmbeddedSet",
    "EvalPairSet",
    "Evaluator",
    "embed_collection",
    "knn_classify",
    "knn_eval",
    "sample_eval_pairs",
    "uncertainty_correlation",
    "verification_eval",
    # Export
    "embed_scatter_export",
]
