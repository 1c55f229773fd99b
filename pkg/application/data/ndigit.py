import math
from typing import Dict, Optional, Tuple

import numpy as np

from application.core.errors import InsufficientDigits, UnsupportedN
from application.core.logging import get_logger
from application.models import ClassSplit, ImageCollection, NDigitDataset, Patch, RawDigitSet
from application.models.dataset import DIGIT_SIDE

logger = get_logger(__name__)

# (training, unseen test, seen test) class counts per digit count
PUBLISHED_SPLIT_COUNTS: Dict[int, Tuple[int, int, int]] = {
    2: (70, 30, 70),
    3: (700, 100, 100),
}


def split_counts(n_digits: int, published_only: bool = True) -> Tuple[int, int, int]:
    """Class counts for a digit count.

    Outside the published rows the counts follow the same rule: 70% of all
    classes train, the rest is unseen test capped at 100 once N >= 3, and the
    seen test classes are the training classes capped at 100 once N >= 3.
    """
    if n_digits in PUBLISHED_SPLIT_COUNTS:
        return PUBLISHED_SPLIT_COUNTS[n_digits]
    if published_only:
        raise UnsupportedN(f"Published class counts exist for N in {{2, 3}}, got N={n_digits}")
    if n_digits < 1:
        raise UnsupportedN(f"N must be at least 1, got {n_digits}")

    total = 10 ** n_digits
    training = round(0.7 * total)
    unseen = total - training
    seen = training
    if n_digits >= 3:
        unseen, seen = min(unseen, 100), min(seen, 100)
    return training, unseen, seen


def build_class_splits(n_digits: int, seed: int, published_only: bool = True) -> ClassSplit:
    n_training, n_unseen, n_seen = split_counts(n_digits, published_only)
    rng = np.random.default_rng(seed)

    order = rng.permutation(10 ** n_digits)
    training = np.sort(order[:n_training])
    remaining = order[n_training:]
    unseen = rng.choice(remaining, size=n_unseen, replace=False)
    seen = rng.choice(training, size=n_seen, replace=False)

    logger.debug(f"Class split N={n_digits}: {n_training} train / {n_unseen} unseen / {n_seen} seen")
    return ClassSplit(
        n_digits=n_digits,
        training_classes=frozenset(int(c) for c in training),
        unseen_test_classes=frozenset(int(c) for c in unseen),
        seen_test_classes=frozenset(int(c) for c in seen),
        seed=seed,
    )


# ============= Occlusion =============
def sample_patches(rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw `size` occlusion rectangles as rows of (x, y, w, h).

    Side lengths are Unif(0, 28) floored to whole pixels; the top-left corner
    is uniform over the positions that keep the rectangle inside the frame.
    """
    sides = np.floor(rng.uniform(0.0, DIGIT_SIDE, size=(size, 2))).astype(np.int64)
    corners = np.floor(rng.uniform(0.0, 1.0, size=(size, 2)) * (DIGIT_SIDE - sides + 1)).astype(np.int64)
    return np.concatenate([corners, sides], axis=1)


def sample_patch(rng: np.random.Generator) -> Patch:
    x, y, w, h = sample_patches(rng, 1)[0]
    return Patch(x=int(x), y=int(y), w=int(w), h=int(h))


def apply_patch(digit: np.ndarray, patch: Patch) -> np.ndarray:
    """Black fill-in of the rectangle; returns a new array."""
    out = np.array(digit, copy=True)
    out[patch.y:patch.y + patch.h, patch.x:patch.x + patch.w] = 0
    return out


def occlude_digit(digit: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return apply_patch(digit, sample_patch(rng))


# ============= Composition =============
def _stratified_classes(classes: Tuple[int, ...], count: int, rng: np.random.Generator) -> np.ndarray:
    per_class = math.ceil(count / len(classes))
    sequence = np.repeat(np.asarray(classes, dtype=np.int64), per_class)
    rng.shuffle(sequence)
    return sequence[:count]


def _digit_matrix(class_ids: np.ndarray, n_digits: int) -> np.ndarray:
    powers = 10 ** np.arange(n_digits - 1, -1, -1)
    return (class_ids[:, None] // powers[None, :]) % 10


def _draw_sources(
    digits: np.ndarray,
    raw:    RawDigitSet,
    rng:    np.random.Generator,
) -> np.ndarray:
    pools = {d: np.flatnonzero(raw.labels == d) for d in range(10)}
    sources = np.empty_like(digits)
    for position in range(digits.shape[1]):
        for d in range(10):
            slots = digits[:, position] == d
            if not slots.any():
                continue
            if pools[d].size == 0:
                raise InsufficientDigits(f"No '{d}' digits in the raw {raw.split_tag} set")
            sources[slots, position] = rng.choice(pools[d], size=int(slots.sum()))
    return sources


def _compose(digit_bytes: np.ndarray, sources: np.ndarray) -> np.ndarray:
    n, n_digits = sources.shape
    tiles = digit_bytes[sources]                    # (n, N, 28, 28)
    return tiles.transpose(0, 2, 1, 3).reshape(n, DIGIT_SIDE, DIGIT_SIDE * n_digits)


def _occlude(pixels: np.ndarray, flags: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Occlude flagged digit slots in place; returns the (n, N, 4) patch table."""
    patches = np.zeros(flags.shape + (4,), dtype=np.uint8)
    rows, positions = np.nonzero(flags)
    drawn = sample_patches(rng, len(rows))
    for row, position, (x, y, w, h) in zip(rows, positions, drawn):
        left = position * DIGIT_SIDE + x
        pixels[row, y:y + h, left:left + w] = 0
        patches[row, position] = (x, y, w, h)
    return patches


def _collection(
    class_ids:  np.ndarray,
    sources:    np.ndarray,
    raw:        RawDigitSet,
    offset:     int,
    flags:      np.ndarray,
    rng:        Optional[np.random.Generator],
) -> ImageCollection:
    pixels = _compose(raw.as_bytes(), sources)
    if flags.any():
        patches = _occlude(pixels, flags, rng)
    else:
        patches = np.zeros(flags.shape + (4,), dtype=np.uint8)
    return ImageCollection(
        pixels=pixels,
        class_ids=class_ids,
        masks=flags,
        provenance=sources + offset,
        patches=patches,
    )


def synthesize(
    raw_train:      RawDigitSet,
    raw_test:       RawDigitSet,
    split:          ClassSplit,
    occlusion_prob: float = 0.2,
    seed:           int = 0,
    n_train:        int = 100_000,
    n_test:         int = 10_000,
) -> NDigitDataset:
    """Build N-digit MNIST from the two MNIST splits.

    Training images come only from the MNIST training digits and test images
    only from the MNIST test digits. Provenance indices are global: test digit
    j is recorded as len(raw_train) + j.
    """
    if not 0.0 <= occlusion_prob <= 1.0:
        raise ValueError(f"occlusion_prob must lie in [0, 1], got {occlusion_prob}")

    n_digits = split.n_digits
    rng = np.random.default_rng(seed)

    train_ids = _stratified_classes(tuple(sorted(split.training_classes)), n_train, rng)
    train_sources = _draw_sources(_digit_matrix(train_ids, n_digits), raw_train, rng)
    train_flags = rng.random(train_sources.shape) < occlusion_prob
    train = _collection(train_ids, train_sources, raw_train, 0, train_flags, rng)
    logger.info(f"Composed {len(train)} training images, {int(train_flags.sum())} occluded digit slots")

    test_ids = _stratified_classes(split.test_classes, n_test, rng)
    test_sources = _draw_sources(_digit_matrix(test_ids, n_digits), raw_test, rng)
    test_clean = _collection(test_ids, test_sources, raw_test, len(raw_train),
                             np.zeros(test_sources.shape, dtype=bool), None)
    test_corrupt = _collection(test_ids, test_sources, raw_test, len(raw_train),
                               np.ones(test_sources.shape, dtype=bool), rng)
    logger.info(f"Composed {len(test_clean)} clean/corrupt test twins over {len(split.test_classes)} classes")

    return NDigitDataset(
        split=split,
        train=train,
        test_clean=test_clean,
        test_corrupt=test_corrupt,
        occlusion_prob=occlusion_prob,
        seed=seed,
    )
