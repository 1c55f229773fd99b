import numpy as np
import pytest

from application.core.errors import InsufficientDigits, UnsupportedN
from application.data import (
    apply_patch,
    build_class_splits,
    occlude_digit,
    sample_patches,
    split_counts,
    synthesize,
)
from application.models import Patch
from tests.conftest import make_raw_digits


@pytest.mark.parametrize("n_digits, counts", [(2, (70, 30, 70)), (3, (700, 100, 100))])
def test_published_class_counts(n_digits, counts):
    split = build_class_splits(n_digits, seed=3)
    assert (len(split.training_classes), len(split.unseen_test_classes), len(split.seen_test_classes)) == counts
    assert split_counts(n_digits) == counts


def test_split_hygiene():
    split = build_class_splits(2, seed=9)
    assert not split.training_classes & split.unseen_test_classes
    assert split.seen_test_classes <= split.training_classes
    assert split.digits_of(7) == (0, 7)


def test_split_is_deterministic():
    assert build_class_splits(2, seed=4) == build_class_splits(2, seed=4)


def test_unsupported_n():
    with pytest.raises(UnsupportedN):
        build_class_splits(4, seed=0)
    assert split_counts(1, published_only=False) == (7, 3, 7)


def test_patches_stay_inside_frame(rng):
    patches = sample_patches(rng, 5000)
    x, y, w, h = patches.T
    assert ((w >= 0) & (w <= 27) & (h >= 0) & (h <= 27)).all()
    assert ((x + w <= 28) & (y + h <= 28)).all()


class ScriptedRng:
    """Stands in for a Generator: each uniform() call returns the next scripted value."""

    def __init__(self, *draws):
        self.draws = list(draws)

    def uniform(self, low, high, size):
        return np.full(size, self.draws.pop(0), dtype=np.float64)


def test_occlude_digit_zero_side_is_identity():
    digit = np.random.default_rng(3).uniform(size=(28, 28))
    np.testing.assert_array_equal(occlude_digit(digit, ScriptedRng(0.0, 0.5)), digit)


def test_occlude_digit_largest_patch():
    digit = np.ones((28, 28))
    out = occlude_digit(digit, ScriptedRng(27.9, 0.0))
    assert out[:27, :27].sum() == 0
    assert out.sum() == 28 * 28 - 27 * 27


def test_full_frame_patch_blacks_out_digit():
    assert not apply_patch(np.ones((28, 28)), Patch(x=0, y=0, w=28, h=28)).any()


def test_apply_patch_blacks_out_rectangle():
    digit = np.ones((28, 28))
    out = apply_patch(digit, Patch(x=3, y=5, w=4, h=2))
    assert out[5:7, 3:7].sum() == 0
    assert out.sum() == 28 * 28 - 8
    assert digit.sum() == 28 * 28


class TestSynthesis:
    def test_counts_and_shapes(self, tiny_dataset):
        assert len(tiny_dataset.train) == 400
        assert len(tiny_dataset.test_clean) == len(tiny_dataset.test_corrupt) == 200
        assert tiny_dataset.train.pixels.shape == (400, 28, 56)

    def test_class_membership(self, tiny_dataset):
        split = tiny_dataset.split
        assert set(np.unique(tiny_dataset.train.class_ids)) <= split.training_classes
        assert set(np.unique(tiny_dataset.test_clean.class_ids)) <= set(split.test_classes)

    def test_no_shared_source_digits(self, tiny_dataset, raw_train):
        assert tiny_dataset.train.provenance.max() < len(raw_train)
        assert tiny_dataset.test_clean.provenance.min() >= len(raw_train)

    def test_twins(self, tiny_dataset):
        clean, corrupt = tiny_dataset.test_clean, tiny_dataset.test_corrupt
        np.testing.assert_array_equal(clean.class_ids, corrupt.class_ids)
        np.testing.assert_array_equal(clean.provenance, corrupt.provenance)
        assert not clean.masks.any() and corrupt.masks.all()
        # outside the recorded patches the twins agree pixel for pixel
        restored = corrupt.pixels.copy()
        for i in range(len(corrupt)):
            for position, (x, y, w, h) in enumerate(corrupt.patches[i]):
                left = 28 * position + x
                assert not corrupt.pixels[i, y:y + h, left:left + w].any()
                restored[i, y:y + h, left:left + w] = clean.pixels[i, y:y + h, left:left + w]
        np.testing.assert_array_equal(restored, clean.pixels)

    def test_digits_match_class(self, tiny_dataset, raw_train):
        train = tiny_dataset.train
        for i in range(20):
            tens, ones = divmod(int(train.class_ids[i]), 10)
            assert raw_train.labels[train.provenance[i, 0]] == tens
            assert raw_train.labels[train.provenance[i, 1]] == ones

    def test_deterministic(self, raw_train, raw_test):
        split = build_class_splits(2, seed=7)
        a = synthesize(raw_train, raw_test, split, seed=3, n_train=50, n_test=20)
        b = synthesize(raw_train, raw_test, split, seed=3, n_train=50, n_test=20)
        np.testing.assert_array_equal(a.train.pixels, b.train.pixels)
        np.testing.assert_array_equal(a.test_corrupt.pixels, b.test_corrupt.pixels)

    def test_missing_digit(self, raw_test):
        raw = make_raw_digits(3)
        keep = raw.labels != 4
        starved = type(raw)(images=raw.images[keep], labels=raw.labels[keep], split_tag="train")
        split = build_class_splits(2, seed=1)
        with pytest.raises(InsufficientDigits):
            synthesize(starved, raw_test, split, n_train=500, n_test=10)


@pytest.fixture(scope="module")
def default_size_dataset(raw_test):
    return synthesize(make_raw_digits(5), raw_test, build_class_splits(2, seed=2), seed=8)


def test_default_counts(default_size_dataset):
    assert len(default_size_dataset.train) == 100_000
    assert len(default_size_dataset.test_clean) == len(default_size_dataset.test_corrupt) == 10_000


def test_occlusion_rate(default_size_dataset):
    # 200k digit slots: the rate's standard error is under 1e-3
    assert default_size_dataset.train.masks.mean() == pytest.approx(0.2, abs=0.005)
