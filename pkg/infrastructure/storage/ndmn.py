import os
import struct
import zlib
from pathlib import Path

import numpy as np

from application.core.errors import ChecksumMismatch, FormatVersionMismatch, IoFailure
from application.core.logging import get_logger
from application.models import ClassSplit, ImageCollection, NDigitDataset
from application.models.dataset import DIGIT_SIDE

logger = get_logger(__name__)

MAGIC = b"NDMN"
FORMAT_VERSION = 1

# Layout (little endian):
# 4s  | magic "NDMN"
# u16 | format version
# u16 | N
# u32 | train count, u32 | test count
# u64 | synthesis seed, f64 | occlusion probability, u64 | split seed
# u32 x3 | training / unseen / seen class counts, then the class ids as u32
# records | train, test_clean, test_corrupt (see _record_dtype)
# u32 | CRC-32 of every preceding byte
_HEADER = struct.Struct("<4sHHIIQdQIII")
_CRC = struct.Struct("<I")


def _record_dtype(n_digits: int) -> np.dtype:
    return np.dtype([
        ("class_id",    "<u4"),
        ("mask",        "u1", ((n_digits + 7) // 8,)),
        ("provenance",  "<u4", (n_digits,)),
        ("patches",     "u1", (n_digits, 4)),
        ("pixels",      "u1", (DIGIT_SIDE, DIGIT_SIDE * n_digits)),
    ])


def _to_records(images: ImageCollection) -> bytes:
    n_digits = images.n_digits
    records = np.zeros(len(images), dtype=_record_dtype(n_digits))
    records["class_id"] = images.class_ids
    records["mask"] = np.packbits(images.masks, axis=1, bitorder="little")
    records["provenance"] = images.provenance
    records["patches"] = images.patches
    records["pixels"] = images.pixels
    return records.tobytes()


def _from_records(buffer: memoryview, count: int, n_digits: int) -> ImageCollection:
    records = np.frombuffer(buffer, dtype=_record_dtype(n_digits), count=count)
    masks = np.unpackbits(records["mask"], axis=1, count=n_digits, bitorder="little").astype(bool)
    return ImageCollection(
        pixels=records["pixels"].copy(),
        class_ids=records["class_id"].astype(np.int64),
        masks=masks,
        provenance=records["provenance"].astype(np.int64),
        patches=records["patches"].copy(),
    )


def write_dataset(ds: NDigitDataset, path: Path | str) -> None:
    path = Path(path)
    split = ds.split
    classes = [sorted(split.training_classes), sorted(split.unseen_test_classes), sorted(split.seen_test_classes)]
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, split.n_digits,
        len(ds.train), len(ds.test_clean),
        ds.seed, ds.occlusion_prob, split.seed,
        *(len(c) for c in classes),
    )
    parts = [header]
    parts.extend(np.asarray(c, dtype="<u4").tobytes() for c in classes)
    parts.extend(_to_records(images) for images in (ds.train, ds.test_clean, ds.test_corrupt))
    payload = b"".join(parts)

    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as f:
            f.write(payload)
            f.write(_CRC.pack(zlib.crc32(payload)))
        os.replace(tmp, path)
    except OSError as e:
        raise IoFailure(f"Cannot write dataset {path}: {e}") from e
    logger.info(f"Wrote dataset {path} ({len(payload) / 1e6:.1f} MB)")


def read_dataset(path: Path | str) -> NDigitDataset:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise IoFailure(f"Cannot read dataset {path}: {e}") from e

    if len(data) < _HEADER.size + _CRC.size or data[:4] != MAGIC:
        raise IoFailure(f"{path} is not an NDMN dataset file")
    (_, version, n_digits, n_train, n_test, seed, occlusion_prob, split_seed,
     n_training, n_unseen, n_seen) = _HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"{path} has format version {version}, expected {FORMAT_VERSION}")

    payload, (crc,) = data[:-_CRC.size], _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(payload) != crc:
        raise ChecksumMismatch(f"{path} failed its CRC-32 check")

    view = memoryview(payload)
    offset = _HEADER.size
    class_sets = []
    for count in (n_training, n_unseen, n_seen):
        ids = np.frombuffer(view[offset:offset + 4 * count], dtype="<u4")
        class_sets.append(frozenset(int(c) for c in ids))
        offset += 4 * count

    record_size = _record_dtype(n_digits).itemsize
    collections = []
    for count in (n_train, n_test, n_test):
        end = offset + count * record_size
        if end > len(view):
            raise ChecksumMismatch(f"{path} ends before its records do")
        collections.append(_from_records(view[offset:end], count, n_digits))
        offset = end

    split = ClassSplit(
        n_digits=n_digits,
        training_classes=class_sets[0],
        unseen_test_classes=class_sets[1],
        seen_test_classes=class_sets[2],
        seed=split_seed,
    )
    logger.info(f"Read dataset {path}: N={n_digits}, {n_train} train / {n_test} test")
    return NDigitDataset(
        split=split,
        train=collections[0],
        test_clean=collections[1],
        test_corrupt=collections[2],
        occlusion_prob=occlusion_prob,
        seed=seed,
    )
