"""Exception types raised across the package."""


class SpinBosonError(Exception):
    """Base class for all package errors."""


class DegenerateSpectrum(SpinBosonError):
    pass


class NonHermitianCoupling(SpinBosonError):
    pass


class NegativeDensity(SpinBosonError):
    pass


class QuadratureFailure(SpinBosonError):
    pass


class TailTooHeavy(SpinBosonError):
    pass


class DegenerateLeadingEigenvalue(SpinBosonError):
    pass


class SeriesNotConverged(SpinBosonError):
    pass


class DivergentIntegral(SpinBosonError):
    pass


class DimensionBudgetExceeded(SpinBosonError):
    pass


class PropagationToleranceFailure(SpinBosonError):
    pass


class HorizonTooLarge(SpinBosonError):
    pass


class ClusterTooLarge(SpinBosonError):
    pass
