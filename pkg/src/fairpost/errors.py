"""Exception hierarchy.

Errors split into two families so the CLI can map them onto exit codes:
``InputError`` (bad data or arguments) and ``InfeasibleError`` (the
requested equalization cannot be constructed for this input).
"""


class FairpostError(Exception):
    """Base class for all package errors."""


class InputError(FairpostError, ValueError):
    pass


class InfeasibleError(FairpostError):
    pass


# -- profiles -----------------------------------------------------------------

class EmptyCommonSupport(InfeasibleError):
    pass


class EmptyGroup(InputError):
    pass


# -- metrics ------------------------------------------------------------------

class MissingStatistic(FairpostError, ValueError):
    pass


# -- thresholding -------------------------------------------------------------

class InvalidRule(InputError):
    pass


class NotNice(InfeasibleError):
    pass


class TargetOutOfRange(InfeasibleError):
    pass


class SupportTooSmall(InfeasibleError):
    pass


class DivisionDegenerate(FairpostError, ArithmeticError):
    pass


class RepairLimitExceeded(InfeasibleError):
    pass


# -- deferral -----------------------------------------------------------------

class AllDeferred(InfeasibleError):
    pass


class SupportViolation(InfeasibleError):
    pass


class NotGroupBlind(InputError):
    pass


class DoesNotPropagateDefer(InputError):
    pass


# -- mass averaging -----------------------------------------------------------

class UnequalBaseRates(InfeasibleError):
    def __init__(self, gap, tolerance):
        super().__init__(
            f"base rates differ by {gap:.6g} (tolerance {tolerance:.3g}); "
            "equal score distributions force equal base rates, "
            "use deferral-based equalization (--mode ap-defer) instead"
        )
        self.gap = gap
        self.tolerance = tolerance


class Infeasible(InfeasibleError):
    pass


class NumericalFailure(FairpostError, ArithmeticError):
    pass


# -- ingest -------------------------------------------------------------------

class MissingColumn(InputError):
    def __init__(self, column, available=()):
        msg = f"missing column {column!r}"
        if available:
            msg += f" (available: {', '.join(available)})"
        super().__init__(msg)
        self.column = column


class UnparsableRow(InputError):
    def __init__(self, problems):
        shown = "; ".join(f"line {ln}: {why}" for ln, why in problems[:10])
        more = f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""
        super().__init__(f"{len(problems)} unparsable row(s): {shown}{more}")
        self.problems = list(problems)


class EmptyAfterFilter(InputError):
    pass


class BucketTooSmall(InputError):
    def __init__(self, buckets, minimum):
        shown = ", ".join(f"{g}/{b} ({n} rows)" for g, b, n in buckets[:10])
        super().__init__(f"buckets below minimum count {minimum}: {shown}")
        self.buckets = list(buckets)
        self.minimum = minimum
