import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from application.models import ImageCollection, NDigitDataset


@dataclass(frozen=True, eq=False)
class PairBatch:
    """Images of one step plus the pairs scored on them.

    `left` and `right` index into `images`; `labels` is 1 where both share a class.
    """
    indices:    np.ndarray      # (B,) rows of the source collection
    images:     np.ndarray      # (B, 28, 28N, 1)
    class_ids:  np.ndarray      # (B,)
    left:       np.ndarray      # (P,)
    right:      np.ndarray      # (P,)
    labels:     np.ndarray      # (P,) 0/1

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def positive_fraction(self) -> float:
        return float(self.labels.mean()) if len(self.labels) else 0.0


class PairSampler:
    """Draws balanced pair batches from one image collection.

    Half of the images come uniformly from the whole collection, half from a
    few anchor classes so that same-class pairs exist in every batch.
    """

    def __init__(self, images: ImageCollection, anchor_classes: int = 8):
        if len(images) < 2:
            raise ValueError("pair batches need at least two images")
        self.images = images
        self.anchor_classes = anchor_classes
        order = np.argsort(images.class_ids, kind="stable")
        classes, starts = np.unique(images.class_ids[order], return_index=True)
        bounds = np.append(starts, len(order))
        self.members: Dict[int, np.ndarray] = {
            int(c): order[bounds[i]:bounds[i + 1]] for i, c in enumerate(classes)
        }
        self.classes = classes

    def _anchor_stream(self, rng: np.random.Generator, size: int) -> np.ndarray:
        n_anchor = min(self.anchor_classes, len(self.classes))
        anchors = rng.choice(self.classes, size=n_anchor, replace=False)
        per_class = math.ceil(size / n_anchor)
        picks = [rng.choice(self.members[int(c)], size=per_class, replace=True) for c in anchors]
        return np.concatenate(picks)[:size]

    def draw(self, rng: np.random.Generator, batch_size: int, n_pairs: Optional[int] = None) -> PairBatch:
        n_pairs = batch_size if n_pairs is None else n_pairs
        half = batch_size // 2
        uniform = rng.integers(0, len(self.images), size=batch_size - half)
        indices = rng.permutation(np.concatenate([uniform, self._anchor_stream(rng, half)]))
        class_ids = self.images.class_ids[indices]

        left, right = np.triu_indices(batch_size, k=1)
        same = class_ids[left] == class_ids[right]
        positives, negatives = np.flatnonzero(same), np.flatnonzero(~same)
        n_pos = min(n_pairs // 2, len(positives))
        n_neg = min(n_pairs - n_pos, len(negatives))
        n_pos = min(n_pairs - n_neg, len(positives))
        chosen = np.concatenate([
            rng.choice(positives, size=n_pos, replace=False),
            rng.choice(negatives, size=n_neg, replace=False),
        ]).astype(np.int64)
        chosen = rng.permutation(chosen)

        return PairBatch(
            indices=indices,
            images=self.images.batch(indices),
            class_ids=class_ids,
            left=left[chosen],
            right=right[chosen],
            labels=same[chosen].astype(np.int64),
        )


def build_pair_batch(
    ds:             NDigitDataset,
    rng:            np.random.Generator,
    batch_size:     int = 128,
    n_pairs:        Optional[int] = None,
    anchor_classes: int = 8,
) -> PairBatch:
    return PairSampler(ds.train, anchor_classes).draw(rng, batch_size, n_pairs)
