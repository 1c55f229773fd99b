from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from application.core.config import RunConfig
from application.utils import sha256_file, write_json

UTC = timezone.utc


def run_manifest(
    command:    str,
    config:     RunConfig,
    seeds:      Mapping[str, int],
    inputs:     Mapping[str, Path | str] = (),
    extra:      Optional[Mapping[str, Any]] = None,
) -> Dict[str, Any]:
    """Resolved configuration, derived seeds and input hashes of one run."""
    manifest: Dict[str, Any] = {
        "command":      command,
        "created_at":   datetime.now(UTC).isoformat(),
        "config":       config.model_dump(mode="json"),
        "seeds":        {name: str(value) for name, value in seeds.items()},
        "inputs":       {name: {"path": str(p), "sha256": sha256_file(p)} for name, p in dict(inputs).items()},
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_manifest(manifest: Mapping[str, Any], path: Path | str) -> Path:
    return write_json(manifest, path)
