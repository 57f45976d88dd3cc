"""Exception hierarchy.

Every error carries the process exit code the command line tool reports for
it, so library callers and the CLI agree on failure classes.
"""


class TiltMottError(Exception):
    exit_code = 1


class ConfigError(TiltMottError):
    """Configuration document or argument fails schema validation."""

    exit_code = 2


class PhysicsGuardError(TiltMottError):
    """Parameters outside the regime an experiment is valid in."""

    exit_code = 3


class ComplexGapError(PhysicsGuardError):
    pass


class ComplexFrequencyError(PhysicsGuardError):
    pass


class WindowViolation(PhysicsGuardError):
    pass


class RegimeViolation(PhysicsGuardError):
    pass


class InvariantViolation(TiltMottError):
    """A conservation law or symmetry failed beyond its stated bound."""

    exit_code = 4


class ProtocolNotTerminated(InvariantViolation):
    pass


class NumericalError(TiltMottError):
    exit_code = 5


class ToleranceNotMet(NumericalError):
    pass


class WindowTooShort(NumericalError):
    pass


class DegenerateFit(NumericalError):
    pass


class StepTooCoarse(NumericalError):
    pass


class ResonanceNotFound(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class GaugeMismatch(ConfigError):
    pass


class SizeExceeded(ConfigError):
    pass
