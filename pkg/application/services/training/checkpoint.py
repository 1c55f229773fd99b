from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from application.core.errors import FormatVersionMismatch
from application.core.logging import get_logger
from application.models import MatchHead, TrainConfig
from application.services.encoder import Encoder, match_head
from application.utils import read_json, write_json
from infrastructure.storage import read_arrays, write_arrays

logger = get_logger(__name__)

CHECKPOINT_VERSION = 1
CURVE_COLUMNS = ("step", "loss", "mean_kl", "a", "b")


@dataclass(eq=False)
class Checkpoint:
    """Everything needed to evaluate a model or continue its training bit for bit."""
    config:             TrainConfig
    params:             Dict[str, np.ndarray]
    step:               int = 0
    optimizer_state:    Dict[str, np.ndarray] = field(default_factory=dict)
    rng_state:          Dict[str, Any] = field(default_factory=dict)
    curve:              List[tuple] = field(default_factory=list)
    window:             np.ndarray = field(default_factory=lambda: np.zeros(3))  # loss sum, kl sum, steps

    @property
    def head(self) -> MatchHead:
        return match_head(self.params)

    def encoder(self) -> Encoder:
        return Encoder(self.config.encoder, self.params)


def sidecar_path(path: Path | str) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _jsonable(value: Any) -> Any:
    # bit-generator states hold 128-bit integers that JSON numbers cannot carry
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return value


def _from_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _from_jsonable(v) for k, v in value.items()}
    if isinstance(value, str) and value.lstrip("-").isdigit():
        return int(value)
    return value


def save_checkpoint(cp: Checkpoint, path: Path | str) -> Path:
    path = Path(path)
    arrays = {f"param.{name}": value for name, value in cp.params.items()}
    arrays.update({f"opt.{name}": value for name, value in cp.optimizer_state.items()})
    arrays["curve"] = np.asarray(cp.curve, dtype=np.float64).reshape(-1, len(CURVE_COLUMNS))
    arrays["window"] = np.asarray(cp.window, dtype=np.float64)
    write_arrays(arrays, path)
    write_json(
        {
            "format_version":   CHECKPOINT_VERSION,
            "step":             cp.step,
            "config":           cp.config.model_dump(mode="json"),
            "rng_state":        _jsonable(cp.rng_state),
        },
        sidecar_path(path),
    )
    logger.debug(f"Checkpoint at step {cp.step} written to {path}")
    return path


def load_checkpoint(path: Path | str) -> Checkpoint:
    path = Path(path)
    meta = read_json(sidecar_path(path))
    version = meta.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise FormatVersionMismatch(f"checkpoint {path} has version {version}, expected {CHECKPOINT_VERSION}")
    arrays = read_arrays(path)
    curve = arrays.get("curve", np.zeros((0, len(CURVE_COLUMNS))))
    return Checkpoint(
        config=TrainConfig.model_validate(meta["config"]),
        params={name[6:]: value for name, value in arrays.items() if name.startswith("param.")},
        step=int(meta["step"]),
        optimizer_state={name[4:]: value for name, value in arrays.items() if name.startswith("opt.")},
        rng_state=_from_jsonable(meta.get("rng_state", {})),
        curve=[(int(row[0]), *map(float, row[1:])) for row in curve],
        window=arrays.get("window", np.zeros(3)),
    )
