from pathlib import Path
from typing import Dict, Optional

from application.core.config import RunConfig
from application.core.dependencies import dataset
from application.core.errors import IoFailure
from application.core.logging import get_logger
from application.commands.manifest import run_manifest, write_manifest
from application.models import EvalConfig
from application.services.evaluation import EvalReport, Evaluator, embed_scatter_export, write_report
from application.services.training import Checkpoint, load_checkpoint
from application.utils import read_json

logger = get_logger(__name__)


def evaluate_checkpoint(
    cp:             Checkpoint,
    config:         RunConfig,
    output_dir:     Path,
    eval_config:    Optional[EvalConfig] = None,
    stem:           str = "report",
) -> EvalReport:
    """Evaluate a checkpoint, write the JSON/CSV report and read the JSON back as validation."""
    ds = dataset(config.DATASET_PATH)
    evaluator = Evaluator(cp.encoder(), ds, eval_config or config.eval_config(), show_progress=True)
    report = evaluator.evaluate(checkpoint_step=cp.step)
    json_path, _ = write_report(report, output_dir, stem)
    if EvalReport.model_validate(read_json(json_path)).schema_version != report.schema_version:
        raise IoFailure(f"{json_path} did not read back as an evaluation report")
    return report


def cmd_eval(config: RunConfig) -> Dict[str, Path]:
    checkpoint_path = config.checkpoint_path
    cp = load_checkpoint(checkpoint_path)
    output_dir = config.output_dir
    eval_config = config.eval_config()
    evaluate_checkpoint(cp, config, output_dir, eval_config)

    written = {"report_json": output_dir / "report.json", "report_csv": output_dir / "report.csv"}
    if config.EVAL_SCATTER:
        written.update(cmd_scatter(config, cp))

    manifest = run_manifest(
        "eval",
        config,
        {"eval": eval_config.seed},
        inputs={"dataset": config.DATASET_PATH, "checkpoint": checkpoint_path},
        extra={"outputs": {name: str(p) for name, p in written.items()}},
    )
    write_manifest(manifest, output_dir / "eval_manifest.json")
    return written


def cmd_scatter(config: RunConfig, cp: Optional[Checkpoint] = None) -> Dict[str, Path]:
    cp = cp or load_checkpoint(config.checkpoint_path)
    ds = dataset(config.DATASET_PATH)
    written = embed_scatter_export(
        cp.encoder(),
        ds,
        config.output_dir / "scatter",
        k=config.EVAL_SAMPLES,
        seed=config.eval_config().seed,
    )
    return {f"scatter_{kind}": p for kind, p in written.items()}
