"""Exception types shared across modules.

Every error carries a short machine-readable ``code`` so that the CLI and
reports can surface the failure kind without string matching.
"""


class EHDError(Exception):
    code = "error"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details


class OutOfDomain(EHDError):
    code = "out-of-domain"


class OnBoundary(EHDError):
    code = "on-boundary"


class UnsupportedExponent(EHDError):
    code = "unsupported-exponent"


class InvalidExponent(EHDError):
    code = "invalid-exponent"


class NotOnePhase(EHDError):
    code = "not-one-phase"


class DegenerateTrace(EHDError):
    code = "degenerate-trace"


class InsufficientArc(EHDError):
    code = "insufficient-arc"


class Diverged(EHDError):
    code = "diverged"


class NumericalFailure(EHDError):
    code = "numerical-failure"


class InnerSolverFailed(EHDError):
    code = "inner-solver-failed"


class NoSolution(EHDError):
    code = "no-solution"
