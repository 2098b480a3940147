"""Exception hierarchy shared across the package."""


class DeepFeaError(Exception):
    """Base class for all package-specific failures."""

    code = "error"


class InvalidTopologyError(DeepFeaError):
    code = "invalid-topology"


class InvalidLoadError(DeepFeaError):
    code = "invalid-load"


class ShapeError(DeepFeaError):
    code = "shape"


class ContractError(DeepFeaError):
    """Violation of an operation precondition (e.g. non-scalar backward root)."""

    code = "contract"


class StatsError(DeepFeaError):
    code = "stats"


class SimulationFailureError(DeepFeaError):
    """Explicit solver lost validity (element inversion, non-finite state)."""

    code = "simulation-failure"


class SolveError(DeepFeaError):
    code = "solve"


class CorruptDatasetError(DeepFeaError):
    code = "corrupt-dataset"


class SplitError(DeepFeaError):
    code = "split"


class UndefinedMetricError(DeepFeaError):
    code = "undefined-metric"


class TrainingDivergedError(DeepFeaError):
    code = "training-diverged"


class ConfigError(DeepFeaError):
    code = "config"
