"""Exception hierarchy.

Input/validation problems derive from :class:`InputError` and numerical
breakdowns from :class:`NumericalError`; the command-line frontend maps the
two families to exit codes 2 and 3.
"""


class HyperGPError(Exception):
    pass


class InputError(HyperGPError, ValueError):
    pass


class NumericalError(HyperGPError, ArithmeticError):
    pass


# hypergraph construction
class IndexOutOfRange(InputError, IndexError):
    pass


class EmptyHyperedge(InputError):
    pass


class DuplicateVertexInEdge(InputError):
    pass


class IsolatedVertex(InputError):
    pass


class NonPositiveWeight(InputError):
    pass


# kernels
class NotSymmetric(InputError):
    pass


class NonPositiveHyperparameter(InputError):
    pass


class NegativeBandwidth(InputError):
    pass


class DuplicateIndex(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class EigenSolverFailure(NumericalError):
    pass


# inference
class SingularSystem(NumericalError):
    pass


class NonFiniteObjective(NumericalError):
    pass


class PowerIterationNoConvergence(NumericalError):
    pass


class InvalidK(InputError):
    pass


class InvalidJ(InputError):
    pass


class InvalidQ(InputError):
    pass


class EmptyInput(InputError):
    pass


# io
class ParseError(InputError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class IoFailure(HyperGPError, OSError):
    pass


class UnknownVertexInLabels(InputError):
    pass


class DuplicateLabel(InputError):
    pass


class DomainWarning(UserWarning):
    """Raised as a warning when a probability is clamped away from zero."""
