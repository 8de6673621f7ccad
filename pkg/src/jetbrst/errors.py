"""Exception hierarchy shared by all jetbrst modules."""


class JetBrstError(Exception):
    """Base class for every error raised by the engine."""


class UnknownGenerator(JetBrstError):
    """A derivation has no action entry for a symbol it was applied to."""


class ParityMismatch(JetBrstError):
    """A substitution maps a generator to an image of different parity."""


class TruncationOverflow(JetBrstError):
    """An operation needed a jet coordinate beyond the model's order cap."""


class ModelError(JetBrstError):
    """Problems in a model source, carrying an optional line/column."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class DslSyntaxError(ModelError):
    pass


class UndeclaredSymbol(ModelError):
    pass


class GradingMismatch(ModelError):
    pass


class UnsupportedAlgebra(JetBrstError):
    pass


class SplitError(JetBrstError):
    """Base class for coordinate-split validation failures."""


class NotTriangular(SplitError):
    pass


class BasisIncomplete(SplitError):
    pass


class DoubletViolation(SplitError):
    pass


class NoLeadingTerm(SplitError):
    pass


class NonvanishingLowDegree(JetBrstError):
    """A residual component of degree <= m survived; the split or engine is broken."""


class NotTerminated(JetBrstError):
    """The iteration did not close within the allowed number of steps."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class UnsupportedDegree(JetBrstError):
    pass


class NonlinearGhostDependence(JetBrstError):
    pass


class NotQuadratic(JetBrstError):
    pass


class NotTildeMode(JetBrstError):
    pass
