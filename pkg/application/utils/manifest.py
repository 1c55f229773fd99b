import hashlib
from pathlib import Path
from typing import Any, Mapping

import orjson

from application.core.errors import IoFailure


def sha256_file(path: Path | str, chunk_size: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for block in iter(lambda: f.read(chunk_size), b""):
                digest.update(block)
    except OSError as e:
        raise IoFailure(f"Cannot hash {path}: {e}") from e
    return digest.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_json(payload: Mapping[str, Any], path: Path | str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY))
    except OSError as e:
        raise IoFailure(f"Cannot write {path}: {e}") from e
    return path


def read_json(path: Path | str) -> Any:
    try:
        return orjson.loads(Path(path).read_bytes())
    except OSError as e:
        raise IoFailure(f"Cannot read {path}: {e}") from e
