import csv
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from application.core.errors import IoFailure
from application.models import EvalConfig
from application.utils import write_json

SCHEMA_VERSION = 1


class Stat(BaseModel):
    """A quantity measured once per evaluation repeat."""
    mean:       Optional[float] = None
    std:        Optional[float] = None
    values:     List[Optional[float]] = Field(default_factory=list)

    @classmethod
    def of(cls, values: Sequence[Optional[float]]) -> "Stat":
        defined = np.array([v for v in values if v is not None], dtype=np.float64)
        if len(defined) == 0:
            return cls(values=list(values))
        std = float(np.std(defined, ddof=1)) if len(defined) > 1 else 0.0
        return cls(mean=float(defined.mean()), std=std, values=list(values))


class VerificationRow(BaseModel):
    condition:      str
    ap:             Stat
    ap_tau:         Stat
    degenerate:     bool = False
    bin_curve:      List[Optional[float]] = Field(default_factory=list)


class KnnRow(BaseModel):
    gallery:            str
    probe:              str
    majority:           Stat
    plurality:          Stat
    accuracy_tau:       Stat
    nn_distance_tau:    Stat
    degenerate:         bool = False
    bin_curve:          List[Optional[float]] = Field(default_factory=list)


class LatentOrder(BaseModel):
    adjacent_share_count:   int
    mean_run_length:        float


class EvalReport(BaseModel):
    schema_version:     int = SCHEMA_VERSION
    model:              str
    representation:     str
    n_digits:           int
    embed_dim:          int
    checkpoint_step:    int
    eval:               EvalConfig
    verification:       List[VerificationRow] = Field(default_factory=list)
    knn:                List[KnnRow] = Field(default_factory=list)
    mean_sigma:         Dict[str, Optional[float]] = Field(default_factory=dict)
    mean_kl:            Dict[str, Optional[float]] = Field(default_factory=dict)
    latent_order:       Optional[LatentOrder] = None

    def verification_row(self, condition: str) -> VerificationRow:
        return next(row for row in self.verification if row.condition == condition)

    def knn_row(self, gallery: str, probe: str) -> KnnRow:
        return next(row for row in self.knn if row.gallery == gallery and row.probe == probe)


CSV_COLUMNS = ("model", "metric", "gallery", "probe", "rule", "mean", "std", "degenerate")


def flatten_report(report: EvalReport) -> List[dict]:
    """Table rows: one per metric and condition, mean and stddev over repeats."""
    rows = []

    def add(metric, stat: Stat, gallery="", probe="", rule="", degenerate=False):
        rows.append({
            "model": report.model, "metric": metric, "gallery": gallery, "probe": probe, "rule": rule,
            "mean": "" if stat.mean is None else f"{stat.mean:.6f}",
            "std": "" if stat.std is None else f"{stat.std:.6f}",
            "degenerate": int(degenerate),
        })

    for row in report.verification:
        add("verification_ap", row.ap, probe=row.condition)
        add("ap_correlation_tau", row.ap_tau, probe=row.condition, degenerate=row.degenerate)
    for row in report.knn:
        add("knn_accuracy", row.majority, row.gallery, row.probe, "majority")
        add("knn_accuracy", row.plurality, row.gallery, row.probe, "plurality")
        add("knn_correlation_tau", row.accuracy_tau, row.gallery, row.probe, "majority", row.degenerate)
        add("nn_distance_tau", row.nn_distance_tau, row.gallery, row.probe, "majority")
    return rows


def write_report(report: EvalReport, directory: Path | str, stem: str = "report") -> tuple[Path, Path]:
    directory = Path(directory)
    json_path = write_json(report.model_dump(mode="json"), directory / f"{stem}.json")
    csv_path = directory / f"{stem}.csv"
    try:
        with open(csv_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            writer.writerows(flatten_report(report))
    except OSError as e:
        raise IoFailure(f"Cannot write {csv_path}: {e}") from e
    return json_path, csv_path
