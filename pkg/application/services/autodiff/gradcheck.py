from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from application.core.logging import get_logger
from application.services.autodiff.graph import CompGraph

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class CheckReport:
    leaf:               str
    coordinates:        np.ndarray      # flat indices that were checked
    analytic:           np.ndarray
    numeric:            np.ndarray
    relative_errors:    np.ndarray
    tolerance:          float

    @property
    def max_relative_error(self) -> float:
        return float(self.relative_errors.max(initial=0.0))

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def finite_difference_check(
    graph:          CompGraph,
    leaf:           str,
    step:           float = 1e-5,
    tolerance:      float = 1e-4,
    inputs:         Optional[Mapping[str, np.ndarray]] = None,
    output:         str = "loss",
    max_coords:     Optional[int] = None,
    abs_floor:      float = 1e-7,
    rng:            Optional[np.random.Generator] = None,
    **context,
) -> CheckReport:
    """Compare the analytic gradient of `output` w.r.t. `leaf` against central differences.

    `leaf` names a parameter or an input. Context (noise draws, pair indices) is
    passed unchanged to every evaluation so the program is deterministic.
    Relative error is |analytic - numeric| / max(|analytic|, |numeric|, abs_floor).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    inputs = {name: np.array(value, dtype=graph.dtype) for name, value in (inputs or {}).items()}
    is_param = leaf in graph.parameters
    if not is_param and leaf not in inputs:
        raise KeyError(f"'{leaf}' is neither a parameter nor an input")

    graph.forward(inputs, **context)
    analytic_full = graph.backward(output, wrt=[leaf])[leaf].ravel()

    target = graph.parameters[leaf] if is_param else inputs[leaf]
    original = target.copy()
    coords = np.arange(target.size)
    if max_coords is not None and target.size > max_coords:
        coords = np.sort((rng or np.random.default_rng(0)).choice(target.size, size=max_coords, replace=False))

    def evaluate() -> float:
        return float(graph.forward(inputs, **context)[output])

    numeric = np.empty(len(coords))
    flat = target.reshape(-1)
    try:
        for i, coord in enumerate(coords):
            flat[coord] = original.flat[coord] + step
            upper = evaluate()
            flat[coord] = original.flat[coord] - step
            lower = evaluate()
            flat[coord] = original.flat[coord]
            numeric[i] = (upper - lower) / (2.0 * step)
    finally:
        target[...] = original

    analytic = analytic_full[coords]
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), abs_floor)
    report = CheckReport(
        leaf=leaf,
        coordinates=coords,
        analytic=analytic,
        numeric=numeric,
        relative_errors=np.abs(analytic - numeric) / scale,
        tolerance=tolerance,
    )
    logger.debug(f"Gradient check '{leaf}': max relative error {report.max_relative_error:.3e}")
    return report
