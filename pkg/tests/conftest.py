from pathlib import Path

import numpy as np
import pytest

from application.data import build_class_splits, serialize_idx_images, serialize_idx_labels, synthesize
from application.models import EncoderConfig, RawDigitSet, TrainConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale training checks")
    parser.addoption("--mnist-dir", default="data", help="directory holding the four MNIST IDX files")
    parser.addoption("--desk-iterations", type=int, default=50_000, help="training steps per desk-scale model")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains models; needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_raw_digits(per_class: int, split_tag: str = "train", seed: int = 0) -> RawDigitSet:
    """Synthetic stand-in for MNIST: digit d is a bright horizontal band at a d-dependent row plus noise."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(10, dtype=np.uint8), per_class)
    images = rng.integers(0, 40, size=(len(labels), 28, 28)).astype(np.float64)
    for i, d in enumerate(labels):
        top = 2 + 2 * int(d)
        images[i, top:top + 4, 4:24] = 255.0
    return RawDigitSet(images=images / 255.0, labels=labels, split_tag=split_tag)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def raw_train() -> RawDigitSet:
    return make_raw_digits(12, "train", seed=1)


@pytest.fixture(scope="session")
def raw_test() -> RawDigitSet:
    return make_raw_digits(6, "test", seed=2)


@pytest.fixture(scope="session")
def tiny_dataset(raw_train, raw_test):
    split = build_class_splits(2, seed=7)
    return synthesize(raw_train, raw_test, split, occlusion_prob=0.2, seed=11, n_train=400, n_test=200)


@pytest.fixture
def idx_files(tmp_path: Path, raw_train, raw_test) -> dict:
    paths = {}
    for tag, raw in (("train", raw_train), ("test", raw_test)):
        paths[f"{tag}_images"] = tmp_path / f"{tag}-images-idx3-ubyte"
        paths[f"{tag}_labels"] = tmp_path / f"{tag}-labels-idx1-ubyte"
        paths[f"{tag}_images"].write_bytes(serialize_idx_images(raw.images))
        paths[f"{tag}_labels"].write_bytes(serialize_idx_labels(raw.labels))
    return paths


@pytest.fixture
def small_encoder() -> EncoderConfig:
    return EncoderConfig(n_digits=2, embed_dim=2, representation="gaussian", conv_channels=(2, 3))


def small_train_config(representation: str = "gaussian", n_components: int = 1, **overrides) -> TrainConfig:
    encoder = EncoderConfig(
        n_digits=2,
        embed_dim=2,
        representation=representation,
        n_components=n_components,
        conv_channels=(2, 3),
    )
    values = dict(
        encoder=encoder,
        batch_size=8,
        pairs_per_batch=8,
        anchor_classes=2,
        iterations=4,
        num_samples=4,
        kl_samples=4,
        log_cadence=2,
        checkpoint_cadence=2,
        seed=5,
    )
    values.update(overrides)
    return TrainConfig(**values)
