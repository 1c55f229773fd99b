from pathlib import Path

from application.core.config import RunConfig
from application.core.errors import IoFailure
from application.core.logging import get_logger
from application.data import build_class_splits, load_raw_digits, synthesize
from application.commands.manifest import run_manifest, write_manifest
from application.utils import derive_seed, sha256_bytes, sha256_file
from infrastructure.storage import read_dataset, write_dataset

logger = get_logger(__name__)


def manifest_path(dataset_path: Path | str) -> Path:
    dataset_path = Path(dataset_path)
    return dataset_path.with_name(dataset_path.name + ".manifest.json")


def cmd_synth(config: RunConfig) -> Path:
    """Compose the N-digit dataset from the MNIST IDX files and store it with a manifest."""
    seeds = {
        "split": derive_seed(config.MASTER_SEED, "split"),
        "synth": derive_seed(config.MASTER_SEED, "synth"),
    }
    raw_train = load_raw_digits(config.TRAIN_IMAGES, config.TRAIN_LABELS, "train")
    raw_test = load_raw_digits(config.TEST_IMAGES, config.TEST_LABELS, "test")
    split = build_class_splits(config.N_DIGITS, seeds["split"], config.PUBLISHED_SPLITS)
    ds = synthesize(
        raw_train,
        raw_test,
        split,
        occlusion_prob=config.OCCLUSION_PROB,
        seed=seeds["synth"],
        n_train=config.N_TRAIN,
        n_test=config.N_TEST,
    )

    path = Path(config.DATASET_PATH)
    write_dataset(ds, path)
    # validate what landed on disk before reporting success
    stored = read_dataset(path)
    if len(stored.train) != len(ds.train) or len(stored.test_clean) != len(ds.test_clean):
        raise IoFailure(f"{path} does not read back with the written counts")

    split_key = "|".join(
        ",".join(str(c) for c in sorted(classes))
        for classes in (split.training_classes, split.unseen_test_classes, split.seen_test_classes)
    )
    manifest = run_manifest(
        "synth",
        config,
        seeds,
        inputs={
            "train_images": config.TRAIN_IMAGES,
            "train_labels": config.TRAIN_LABELS,
            "test_images": config.TEST_IMAGES,
            "test_labels": config.TEST_LABELS,
        },
        extra={
            "dataset": {"path": str(path), "sha256": sha256_file(path)},
            "counts": {
                "train": len(ds.train),
                "test_clean": len(ds.test_clean),
                "test_corrupt": len(ds.test_corrupt),
                "training_classes": len(split.training_classes),
                "unseen_test_classes": len(split.unseen_test_classes),
                "seen_test_classes": len(split.seen_test_classes),
            },
            "split_sha256": sha256_bytes(split_key.encode("ascii")),
        },
    )
    write_manifest(manifest, manifest_path(path))
    logger.info(
        f"Dataset N={split.n_digits} written to {path}: "
        f"{len(ds.train)}/{len(ds.test_clean)}/{len(ds.test_corrupt)} train/clean/corrupt images"
    )
    return path
