"""Exception hierarchy shared by all loggas modules."""


class LogGasError(Exception):
    """Base class; `module` and `operation` give provenance for CLI error reports."""

    module = "loggas"

    def __init__(self, message, *, operation=None, **details):
        super().__init__(message)
        self.operation = operation
        self.details = details

    def to_dict(self):
        return {
            "error": type(self).__name__,
            "module": self.module,
            "operation": self.operation,
            "message": str(self),
            "details": {k: _jsonable(v) for k, v in self.details.items()},
        }


def _jsonable(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return str(v)


class ModelError(LogGasError):
    module = "model"


class DuplicatePositions(ModelError):
    pass


class QuadratureFailure(ModelError):
    pass


class QuadratureNotConverged(LogGasError):
    module = "quadrature"


class EquilibriumError(LogGasError):
    module = "equilibrium"


class NotConvex(EquilibriumError):
    pass


class NoConvergence(EquilibriumError):
    pass


class HypothesisViolated(EquilibriumError):
    pass


class OrthopolyError(LogGasError):
    module = "orthopoly"


class PrecisionLoss(OrthopolyError):
    def __init__(self, message, *, achievable_degree=None, **kw):
        super().__init__(message, achievable_degree=achievable_degree, **kw)
        self.achievable_degree = achievable_degree


class NumericallyNegative(OrthopolyError):
    pass


class EdgeTooClose(OrthopolyError):
    pass


class SamplerError(LogGasError):
    module = "sampler"


class InitFailure(SamplerError):
    pass


class StuckChain(SamplerError):
    pass


class StatsError(LogGasError):
    module = "stats"


class TooFewSamples(StatsError):
    pass


class EmptyWindow(StatsError):
    pass


class NotPSD(StatsError):
    def __init__(self, message, *, min_eigenvalue=None, **kw):
        super().__init__(message, min_eigenvalue=min_eigenvalue, **kw)
        self.min_eigenvalue = min_eigenvalue


class VarianceBlowup(StatsError):
    pass


class ConfigInvalid(LogGasError):
    module = "cli"
