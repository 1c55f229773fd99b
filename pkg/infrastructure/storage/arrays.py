import os
import struct
import zlib
from pathlib import Path
from typing import Dict

import numpy as np

from application.core.errors import ChecksumMismatch, FormatVersionMismatch, IoFailure

MAGIC = b"HIBA"
FORMAT_VERSION = 1

# Layout (little endian):
# 4s  | magic "HIBA"
# u16 | format version
# u32 | array count
# per array: u16 name length, utf-8 name, u8 ndim, u32 x ndim extents, f64 x prod(extents)
# u32 | CRC-32 of every preceding byte
_HEADER = struct.Struct("<4sHI")
_CRC = struct.Struct("<I")


def write_arrays(arrays: Dict[str, np.ndarray], path: Path | str) -> None:
    """Store named float arrays as raw little-endian doubles."""
    path = Path(path)
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(arrays))]
    for name in sorted(arrays):
        value = np.asarray(arrays[name], dtype="<f8")
        encoded = name.encode("utf-8")
        parts.append(struct.pack(f"<H{len(encoded)}sB", len(encoded), encoded, value.ndim))
        parts.append(struct.pack(f"<{value.ndim}I", *value.shape))
        parts.append(value.tobytes())
    payload = b"".join(parts)

    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as f:
            f.write(payload)
            f.write(_CRC.pack(zlib.crc32(payload)))
        os.replace(tmp, path)
    except OSError as e:
        raise IoFailure(f"Cannot write array container {path}: {e}") from e


def read_arrays(path: Path | str) -> Dict[str, np.ndarray]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise IoFailure(f"Cannot read array container {path}: {e}") from e

    if len(data) < _HEADER.size + _CRC.size or data[:4] != MAGIC:
        raise IoFailure(f"{path} is not an array container")
    _, version, count = _HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"{path} has format version {version}, expected {FORMAT_VERSION}")
    payload, (crc,) = data[:-_CRC.size], _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(payload) != crc:
        raise ChecksumMismatch(f"{path} failed its CRC-32 check")

    arrays: Dict[str, np.ndarray] = {}
    offset = _HEADER.size
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", payload, offset)
        offset += 2
        name = payload[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", payload, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", payload, offset)
        offset += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(payload, dtype="<f8", count=size, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * size
    return arrays
