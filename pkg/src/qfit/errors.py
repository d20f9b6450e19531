"""Exception hierarchy.

Three families map onto CLI exit codes: malformed input (2), violated
preconditions (3) and exhausted resource caps (4).
"""


class QfitError(Exception):
    exit_code = 1


class InputError(QfitError, ValueError):
    exit_code = 2


class PreconditionError(QfitError, ValueError):
    exit_code = 3


class ResourceError(QfitError, RuntimeError):
    exit_code = 4


class ParseError(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class RankDeficient(PreconditionError):
    pass


class NotHermitian(PreconditionError):
    pass


class DimMismatch(PreconditionError):
    pass


class BadFactorization(PreconditionError):
    pass


class ZeroInput(PreconditionError):
    pass


class ZeroRow(PreconditionError):
    pass


class BadDimension(PreconditionError):
    pass


class BadWeights(PreconditionError):
    pass


class HypothesisViolated(PreconditionError):
    pass


class PhiTooSmall(PreconditionError):
    def __init__(self, message, phi_estimate=None):
        super().__init__(message)
        self.phi_estimate = phi_estimate


class ResourceCap(ResourceError):
    pass


class BudgetTooLarge(ResourceCap):
    pass


class NonConvergence(ResourceCap):
    pass
