from dataclasses import dataclass
from typing import FrozenSet, Literal, Tuple

import numpy as np

DIGIT_SIDE = 28


@dataclass(frozen=True, eq=False)
class RawDigitSet:
    """One MNIST split as parsed from its IDX pair; pixels already in [0, 1]."""
    images:     np.ndarray          # (n, 28, 28) float64
    labels:     np.ndarray          # (n,) uint8, 0..9
    split_tag:  Literal["train", "test"]

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def as_bytes(self) -> np.ndarray:
        """Pixels quantized back to their original u8 values."""
        return np.rint(self.images * 255.0).astype(np.uint8)


@dataclass(frozen=True)
class Patch:
    """Occlusion rectangle in digit-local pixel coordinates."""
    x:  int
    y:  int
    w:  int
    h:  int


@dataclass(frozen=True)
class ClassSplit:
    n_digits:               int
    training_classes:       FrozenSet[int]
    unseen_test_classes:    FrozenSet[int]
    seen_test_classes:      FrozenSet[int]
    seed:                   int

    @property
    def test_classes(self) -> Tuple[int, ...]:
        return tuple(sorted(self.seen_test_classes | self.unseen_test_classes))

    def digits_of(self, class_id: int) -> Tuple[int, ...]:
        """Digits of a class id, most significant first ("07" -> (0, 7))."""
        return tuple(int(c) for c in f"{class_id:0{self.n_digits}d}")


@dataclass(frozen=True, eq=False)
class NDigitImage:
    pixels:         np.ndarray      # (28, 28N) float64 in [0, 1]
    class_id:       int
    corrupted_mask: Tuple[bool, ...]


@dataclass(frozen=True, eq=False)
class ImageCollection:
    """Column store of composed images; pixels kept as u8 to bound memory."""
    pixels:     np.ndarray          # (n, 28, 28N) uint8
    class_ids:  np.ndarray          # (n,) int64
    masks:      np.ndarray          # (n, N) bool
    provenance: np.ndarray          # (n, N) int64, source MNIST indices
    patches:    np.ndarray          # (n, N, 4) uint8, (x, y, w, h) per digit

    def __len__(self) -> int:
        return len(self.class_ids)

    @property
    def n_digits(self) -> int:
        return self.masks.shape[1]

    def __getitem__(self, i: int) -> NDigitImage:
        return NDigitImage(
            pixels=self.pixels[i] / 255.0,
            class_id=int(self.class_ids[i]),
            corrupted_mask=tuple(bool(b) for b in self.masks[i]),
        )

    def batch(self, indices: np.ndarray) -> np.ndarray:
        """Float batch shaped (b, 28, 28N, 1) for the encoder."""
        return (self.pixels[indices].astype(np.float64) / 255.0)[..., None]


@dataclass(frozen=True, eq=False)
class NDigitDataset:
    split:          ClassSplit
    train:          ImageCollection
    test_clean:     ImageCollection
    test_corrupt:   ImageCollection
    occlusion_prob: float
    seed:           int

    def test(self, condition: Literal["clean", "corrupt"]) -> ImageCollection:
        return self.test_clean if condition == "clean" else self.test_corrupt
