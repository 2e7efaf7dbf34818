"""Exception hierarchy shared by every stage of the verifier."""


class VerificationError(Exception):
    """Base class for all computational failures raised by l1verify."""


class EvaluationError(VerificationError):
    """An evaluator returned a non-finite or malformed value."""


class UnsupportedHamiltonianForm(VerificationError):
    pass


class IntegrationError(VerificationError):
    """Step-size underflow or another failure of the ODE stepper."""


class EventRefinementError(VerificationError):
    pass


class ResolutionError(VerificationError):
    """Zero search could not isolate roots; tighten tolerances."""


class ScheduleError(VerificationError):
    """The reference schedule violates 0 < tau1 < tau2 < T or u in {-1, 1}."""


class NTViolation(VerificationError):
    """A tangential crossing of {psi = 0} on a bang arc."""


class SSViolation(VerificationError):
    """psi vanishes at (or within the exclusion window of) a switching time."""


class ShootingError(VerificationError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class StructureViolation(VerificationError):
    """Switching times lost their order during a Newton iteration."""


class StructureMismatch(VerificationError):
    """The maximized flow left the bang-zero-bang pattern of the reference."""


class DegenerateSwitchError(VerificationError):
    pass


class IncompletePullbackError(VerificationError):
    pass


class NumericalError(VerificationError):
    pass


class BranchInapplicable(VerificationError):
    """Horizon outside the bang-zero-bang branch of a closed-form benchmark."""


class ConfigError(VerificationError):
    pass


class StageError(VerificationError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
