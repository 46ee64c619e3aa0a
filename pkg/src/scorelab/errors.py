"""Exception hierarchy.

Two families: :class:`SpecificationError` for bad inputs (the CLI maps these
to exit code 2) and :class:`NumericalError` for numeric or convergence
failures (exit code 3).
"""


class ScorelabError(Exception):
    """Base class for all scorelab errors."""


class SpecificationError(ScorelabError, ValueError):
    """Malformed user input (arguments, density strings, files)."""


class NumericalError(ScorelabError, ArithmeticError):
    """A computation failed or did not converge."""


class InvalidWeights(SpecificationError):
    pass


class InvalidOrder(SpecificationError):
    pass


class InvalidCoefficient(SpecificationError):
    pass


class MissingPartials(SpecificationError):
    pass


class ParseError(SpecificationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InconsistentEnsembleSize(ParseError):
    pass


class DensityZeroAtPoint(NumericalError):
    pass


class DegenerateNorm(NumericalError):
    pass


class QuadratureNonconvergent(NumericalError):
    pass


class RecoveryResidualLarge(NumericalError):
    pass


class InsufficientTraining(NumericalError):
    pass


class SingularRegression(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class DegenerateEnsemble(NumericalError):
    pass
