"""Exception hierarchy.

Precondition violations (the caller asked for something the theory does not
cover) derive from ``PreconditionError``; numerical failures derive from
``NumericalError``. The CLI maps the two families to distinct exit codes.
"""


class SRBResponseError(Exception):
    """Base class for all package errors."""


class PreconditionError(SRBResponseError):
    pass


class NumericalError(SRBResponseError):
    pass


class DomainEscape(PreconditionError):
    """The perturbed map does not send [a, b] into itself."""


class NearCriticalOrbit(PreconditionError):
    """An orbit point of the critical point came too close to c."""


class CodeNotRealizable(PreconditionError):
    """No tent map slope in (1, 2] realizes the requested kneading code."""


class NotMarkov(PreconditionError):
    """The critical point was not detected to be preperiodic."""


class UnsupportedInput(PreconditionError):
    pass


class ObservableNotC1(PreconditionError):
    pass


class NonzeroJump(PreconditionError):
    """The weighted total jump J(f, X) does not vanish."""


class ResidueNonzero(PreconditionError):
    """The susceptibility function has a pole at z = 1."""


class ConfigError(PreconditionError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NoConvergence(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class NonZeroMean(NumericalError):
    """A function fed to the resolvent (id - L1)^-1 is not mean zero."""


class JumpBelowNoise(NumericalError):
    pass


class FitUnstable(NumericalError):
    pass
