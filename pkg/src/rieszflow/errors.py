"""Exception hierarchy shared by all rieszflow modules."""


class RieszFlowError(Exception):
    """Base class for every error raised by the package."""


class DiagonalSingularity(RieszFlowError, ValueError):
    """A singular kernel was evaluated at coincident points."""


class DomainMismatch(RieszFlowError, ValueError):
    """Point dimension or domain type does not match the kernel/measure."""


class TruncationTooSmall(RieszFlowError, ValueError):
    pass


class NonpositiveTime(RieszFlowError, ValueError):
    pass


class LatticeMismatch(RieszFlowError, ValueError):
    pass


class DegenerateFit(RieszFlowError, ValueError):
    """A log-log fit could not be performed (zero or non-finite values)."""


class TorusUnsupported(RieszFlowError, ValueError):
    pass


class NonzeroMean(RieszFlowError, ValueError):
    """Poisson source on the torus does not integrate to zero."""


class ZeroDensityCell(RieszFlowError, ValueError):
    pass


class ParticleCollision(RieszFlowError, ArithmeticError):
    pass


# the step/run operations report collisions under this name
CollisionDetected = ParticleCollision


class BlowupDetected(RieszFlowError, ArithmeticError):
    pass


class MassDriftExceeded(RieszFlowError, ArithmeticError):
    pass


class MassMismatch(RieszFlowError, ValueError):
    pass


class SizeExceeded(RieszFlowError, ValueError):
    pass


class NonConvergence(RieszFlowError, RuntimeError):
    pass


class LineSearchFailure(RieszFlowError, RuntimeError):
    pass


class NoDescentSet(RieszFlowError, RuntimeError):
    pass


class ConfigError(RieszFlowError, ValueError):
    """Base for configuration problems (CLI exit code 2)."""


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)


class ValidationError(ConfigError):
    def __init__(self, field, message, line=None):
        self.field = field
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field}: {message}{where}")


class IoError(RieszFlowError, OSError):
    pass


class CflViolation(RieszFlowError, ValueError):
    """Time step too large for the current velocity gradient."""
