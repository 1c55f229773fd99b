from pathlib import Path

from application.core.config import RunConfig
from application.core.dependencies import dataset
from application.core.errors import IoFailure
from application.core.logging import get_logger
from application.commands.manifest import run_manifest, write_manifest
from application.services.training import check_sampling, load_checkpoint, train

logger = get_logger(__name__)


def cmd_train(config: RunConfig, resume: bool = False) -> Path:
    """Train one model into OUTPUT_DIR: checkpoint.bin (+ .json), curve.csv, train_manifest.json."""
    train_config = config.train_config()
    check_sampling(train_config)
    output_dir = config.output_dir
    checkpoint_path = output_dir / "checkpoint.bin"

    previous = None
    if resume:
        if not checkpoint_path.is_file():
            raise IoFailure(f"No checkpoint to resume from at {checkpoint_path}")
        previous = load_checkpoint(checkpoint_path)

    ds = dataset(config.DATASET_PATH)
    cp = train(train_config, ds, output_dir=output_dir, resume=previous)

    reloaded = load_checkpoint(checkpoint_path)
    if reloaded.step != cp.step:
        raise IoFailure(f"{checkpoint_path} holds step {reloaded.step}, expected {cp.step}")

    manifest = run_manifest(
        "train",
        config,
        {"train": train_config.seed},
        inputs={"dataset": config.DATASET_PATH},
        extra={
            "model": train_config.encoder.label,
            "resumed_from_step": previous.step if previous else None,
            "final_step": cp.step,
            "final_loss": cp.curve[-1][1] if cp.curve else None,
            "checkpoint": str(checkpoint_path),
        },
    )
    write_manifest(manifest, output_dir / "train_manifest.json")
    return checkpoint_path
