"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all spikefourier-specific failures."""


class ConditioningError(ToolkitError):
    """A Jacobian or linear system is numerically singular."""


class ModelOrderError(ToolkitError):
    """Moment data is consistent with fewer spikes than requested."""


class InconsistencyError(ToolkitError):
    """Moment data does not come from a real spike train (complex nodes)."""


class NoConvergenceError(ToolkitError):
    """Newton iteration stalled; carries the last iterate and its residual."""

    def __init__(self, message, last=None, residual=None):
        super().__init__(message)
        self.last = last
        self.residual = residual


class ConstructionError(ToolkitError):
    """Adversary continuation failed; carries the largest achieved eta."""

    def __init__(self, message, eta_achieved=0.0):
        super().__init__(message)
        self.eta_achieved = eta_achieved


class BoundViolationError(ToolkitError):
    """Constructed signal left the admissible amplitude or node region."""


class ValidityRangeError(ToolkitError):
    """Requested bandwidth lies outside the range where the gap bound holds."""


class GapUnderflowError(ToolkitError):
    """Fourier gap is numerically zero everywhere on the requested grid."""


class OutOfBandError(ToolkitError):
    """Oracle was queried outside its measured frequency band."""


class NoiseBoundError(ToolkitError):
    """A noise sample exceeded the oracle's declared uniform bound."""


class ReconstructionError(ToolkitError):
    """No reconstruction candidate met the residual acceptance threshold."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
