import struct
from pathlib import Path
from typing import Literal, Optional

import numpy as np

from application.core.errors import BadMagic, DimMismatch, IoFailure, LabelOutOfRange, Truncated
from application.core.logging import get_logger
from application.models import RawDigitSet

logger = get_logger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
MNIST_SIDE = 28

# Data format (big endian):
# u32 | Magic (0x0803 images, 0x0801 labels)
# u32 | Item count
# u32 | Row count     (images only)
# u32 | Column count  (images only)
# u8[] | Payload (row-major pixels, or one label per item)


def _read_header(data: bytes, magic: int, n_fields: int) -> tuple:
    size = 4 * (1 + n_fields)
    if len(data) < 4:
        raise Truncated(f"IDX header needs {size} bytes, got {len(data)}")
    (found,) = struct.unpack_from(">I", data, 0)
    if found != magic:
        raise BadMagic(f"Magic number mismatch: expected {magic:#010x}, got {found:#010x}")
    if len(data) < size:
        raise Truncated(f"IDX header needs {size} bytes, got {len(data)}")
    return struct.unpack_from(f">{n_fields}I", data, 4)


def parse_idx_images(data: bytes, required_side: Optional[int] = MNIST_SIDE) -> np.ndarray:
    """Decode an idx3-ubyte payload into an (n, rows, cols) array of pixels in [0, 1]."""
    n, rows, cols = _read_header(data, IDX_IMAGE_MAGIC, 3)
    if required_side is not None and (rows != required_side or cols != required_side):
        raise DimMismatch(f"Expected {required_side}x{required_side} images, got {rows}x{cols}")

    expected = n * rows * cols
    payload = memoryview(data)[16:]
    if len(payload) < expected:
        raise Truncated(f"Image payload holds {len(payload)} bytes, header promises {expected}")

    pixels = np.frombuffer(payload[:expected], dtype=np.uint8).reshape(n, rows, cols)
    return pixels / 255.0


def parse_idx_labels(data: bytes) -> np.ndarray:
    """Decode an idx1-ubyte payload into an (n,) array of digit classes."""
    (n,) = _read_header(data, IDX_LABEL_MAGIC, 1)
    payload = memoryview(data)[8:]
    if len(payload) < n:
        raise Truncated(f"Label payload holds {len(payload)} bytes, header promises {n}")

    labels = np.frombuffer(payload[:n], dtype=np.uint8).copy()
    if labels.size and labels.max() > 9:
        bad = int(labels[labels > 9][0])
        raise LabelOutOfRange(f"Label {bad} outside 0..9")
    return labels


def serialize_idx_images(images: np.ndarray) -> bytes:
    n, rows, cols = images.shape
    body = np.rint(np.asarray(images) * 255.0).astype(np.uint8).tobytes()
    return struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols) + body


def serialize_idx_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", IDX_LABEL_MAGIC, len(labels)) + labels.tobytes()


def _read_file(path: Path | str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"Cannot read IDX file {path}: {e}") from e


def load_raw_digits(
    images_path:    Path | str,
    labels_path:    Path | str,
    split_tag:      Literal["train", "test"],
) -> RawDigitSet:
    """Read one MNIST split from its image/label IDX pair."""
    images = parse_idx_images(_read_file(images_path))
    labels = parse_idx_labels(_read_file(labels_path))
    if len(images) != len(labels):
        raise DimMismatch(f"{images_path} has {len(images)} images but {labels_path} has {len(labels)} labels")

    logger.info(f"Loaded {len(labels)} {split_tag} digits from {images_path}")
    return RawDigitSet(images=images, labels=labels, split_tag=split_tag)
