"""Exception hierarchy shared by all mcdp modules."""


class MCDPError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatch(MCDPError, ValueError):
    pass


class NonPositiveDepth(MCDPError, ValueError):
    pass


class BehindCamera(MCDPError, ValueError):
    pass


class BehindTarget(MCDPError, ValueError):
    """A warped point lands behind the target camera (z <= 0)."""


class ZeroBases(MCDPError, ValueError):
    pass


class EmptyOverlap(MCDPError, ValueError):
    """No pixel is jointly valid in the maps being compared."""


class ZeroMedian(MCDPError, ValueError):
    pass


class NonFiniteObjective(MCDPError, ArithmeticError):
    """The refinement objective evaluated to NaN or inf.

    ``entry_weights`` holds the per-camera weights the aborted round started
    from, so callers can recover the last good state.
    """

    def __init__(self, message, entry_weights=None):
        super().__init__(message)
        self.entry_weights = entry_weights


class DegenerateSpec(MCDPError, ValueError):
    pass


class ValidationError(MCDPError, ValueError):
    pass


class ParseError(MCDPError, ValueError):
    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.field = field


class MissingFile(MCDPError, FileNotFoundError):
    def __init__(self, path):
        super().__init__(f"missing file: {path}")
        self.path = path
