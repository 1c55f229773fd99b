"""Exception hierarchy shared by every stage of the pipeline.

Each family carries the process exit code the CLI reports when it escapes a
command, so scripts driving the CLI can tell a malformed input file from a
diverged training run.
"""


class HIBError(Exception):
    """Root of all errors raised by the hedged-embedding pipeline."""
    exit_code: int = 1


# ============= IDX ingestion =============
class IdxFormatError(HIBError, ValueError):
    exit_code = 10

class BadMagic(IdxFormatError):
    pass

class Truncated(IdxFormatError):
    pass

class DimMismatch(IdxFormatError):
    """Extents disagree: image rows/cols, or embedding dimensions."""
    pass

class LabelOutOfRange(IdxFormatError):
    pass


# ============= Dataset synthesis =============
class DatasetError(HIBError, ValueError):
    exit_code = 20

class UnsupportedN(DatasetError):
    pass

class InsufficientDigits(DatasetError):
    pass


# ============= Persistence =============
class StorageError(HIBError):
    exit_code = 30

class IoFailure(StorageError, OSError):
    exit_code = 31

class FormatVersionMismatch(StorageError):
    exit_code = 32

class ChecksumMismatch(StorageError):
    exit_code = 33


# ============= Autodiff =============
class GraphError(HIBError):
    exit_code = 40

class ShapeMismatch(GraphError, ValueError):
    pass

class NonFiniteValue(GraphError, FloatingPointError):
    pass

class NotScalarOutput(GraphError, ValueError):
    pass

class ForwardNotRun(GraphError, RuntimeError):
    pass


# ============= Sampling =============
class SamplingError(HIBError, ValueError):
    exit_code = 50

class StratificationError(SamplingError):
    pass

class NonPositiveSigma(SamplingError):
    pass


# ============= Training =============
class TrainingError(HIBError):
    exit_code = 60

class DivergenceDetected(TrainingError, FloatingPointError):
    pass

class RunMismatch(TrainingError, ValueError):
    pass


# ============= Evaluation =============
class EvalError(HIBError, ValueError):
    exit_code = 70

class NoPositives(EvalError):
    pass

class GalleryTooSmall(EvalError):
    pass

class DegenerateInput(EvalError):
    pass

class WrongDimensionality(EvalError):
    pass

class UnsupportedDim(EvalError):
    pass
