"""Exception hierarchy.

Every error carries a short ``code`` so the CLI can report it as
``{"code": ..., "message": ...}``. ``ValidationError`` subclasses map to exit
status 1, everything else to exit status 2.
"""


class AlignError(Exception):
    code = "error"


class ValidationError(AlignError, ValueError):
    code = "invalid"


class ComputationError(AlignError, ArithmeticError):
    code = "computation"


class NegativeEntry(ValidationError):
    code = "negative_entry"


class NotNormalized(ValidationError):
    code = "not_normalized"


class NotADistribution(ValidationError):
    code = "not_a_distribution"


class NotStochastic(ValidationError):
    code = "not_stochastic"


class DimensionMismatch(ValidationError):
    code = "dimension_mismatch"


class SizeOverflow(ValidationError):
    code = "size_overflow"


class TooLarge(ValidationError):
    code = "too_large"


class DegenerateEps(ValidationError):
    code = "degenerate_eps"


class EigenNoConvergence(ComputationError):
    code = "eigen_no_convergence"


class Infeasible(ComputationError):
    code = "infeasible"
