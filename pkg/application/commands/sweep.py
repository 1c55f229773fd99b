import csv
from pathlib import Path
from typing import Dict, List

from application.core.config import RunConfig
from application.core.dependencies import dataset
from application.core.errors import IoFailure
from application.core.logging import get_logger
from application.commands.evaluate import evaluate_checkpoint
from application.commands.manifest import run_manifest, write_manifest
from application.models import TrainConfig
from application.services.evaluation import EvalReport
from application.services.training import check_sampling, train
from application.utils import derive_seed, write_json

logger = get_logger(__name__)

SUMMARY_COLUMNS = (
    "run", "seed", "loss", "margin", "beta",
    "ap_clean", "ap_corrupt", "knn_clean", "knn_corrupt_gallery", "ap_tau_corrupt",
    "mean_kl_clean", "mean_kl_corrupt", "mean_sigma_clean", "mean_sigma_corrupt",
)


def _runs(config: RunConfig, seed: int) -> Dict[str, TrainConfig]:
    base = config.train_config(seed=derive_seed(seed, "train"))
    if config.SWEEP_KIND == "beta":
        return {f"beta-{beta:g}": base.model_copy(update={"beta": beta}) for beta in config.SWEEP_BETAS}
    point = base.encoder.model_copy(update={"representation": "point", "n_components": 1})
    runs = {"soft": base.model_copy(update={"encoder": point, "loss": "soft"})}
    for margin in config.SWEEP_MARGINS:
        runs[f"hard-m{margin:g}"] = base.model_copy(update={"encoder": point, "loss": "hard", "margin": margin})
    return runs


def _summary_row(name: str, seed: int, train_config: TrainConfig, report: EvalReport) -> dict:
    def mean(stat):
        return "" if stat.mean is None else f"{stat.mean:.6f}"

    def opt(value):
        return "" if value is None else f"{value:.6f}"

    return {
        "run": name,
        "seed": seed,
        "loss": train_config.loss,
        "margin": train_config.margin if train_config.loss == "hard" else "",
        "beta": train_config.beta,
        "ap_clean": mean(report.verification_row("clean").ap),
        "ap_corrupt": mean(report.verification_row("corrupt").ap),
        "knn_clean": mean(report.knn_row("clean", "clean").majority),
        "knn_corrupt_gallery": mean(report.knn_row("corrupt", "clean").majority),
        "ap_tau_corrupt": mean(report.verification_row("corrupt").ap_tau),
        "mean_kl_clean": opt(report.mean_kl.get("clean")),
        "mean_kl_corrupt": opt(report.mean_kl.get("corrupt")),
        "mean_sigma_clean": opt(report.mean_sigma.get("clean")),
        "mean_sigma_corrupt": opt(report.mean_sigma.get("corrupt")),
    }


def cmd_sweep(config: RunConfig) -> Path:
    """Train and evaluate one model per (seed, sweep point) and tabulate the results."""
    root = config.output_dir
    plan = {seed: _runs(config, seed) for seed in config.SWEEP_SEEDS}
    for runs in plan.values():
        for train_config in runs.values():
            check_sampling(train_config)

    ds = dataset(config.DATASET_PATH)
    rows: List[dict] = []
    for seed, runs in plan.items():
        for name, train_config in runs.items():
            run_dir = root / name / f"seed-{seed}"
            logger.info(f"Sweep run {name}, seed {seed} -> {run_dir}")
            cp = train(train_config, ds, output_dir=run_dir)
            eval_config = config.eval_config().model_copy(update={"seed": derive_seed(seed, "eval")})
            report = evaluate_checkpoint(cp, config, run_dir, eval_config)
            rows.append(_summary_row(name, seed, train_config, report))

    summary_csv = root / "sweep_summary.csv"
    try:
        root.mkdir(parents=True, exist_ok=True)
        with open(summary_csv, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    except OSError as e:
        raise IoFailure(f"Cannot write {summary_csv}: {e}") from e
    write_json({"kind": config.SWEEP_KIND, "runs": rows}, root / "sweep_summary.json")

    manifest = run_manifest(
        "sweep",
        config,
        {f"seed-{seed}": derive_seed(seed, "train") for seed in config.SWEEP_SEEDS},
        inputs={"dataset": config.DATASET_PATH},
        extra={"runs": [row["run"] + f"/seed-{row['seed']}" for row in rows]},
    )
    write_manifest(manifest, root / "sweep_manifest.json")
    return summary_csv
