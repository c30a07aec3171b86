"""Exception hierarchy.

Every error carries a ``kind`` used by the command line front end to pick
an exit code: ``io`` (1), ``stats`` (2) or ``convergence`` (3).
"""


class VaxSignalError(Exception):
    kind = "stats"


class ParseError(VaxSignalError, ValueError):
    kind = "io"

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class EmptyOverlap(VaxSignalError, ValueError):
    pass


class MissingMonth(VaxSignalError, ValueError):
    pass


class MissingCohort(VaxSignalError, KeyError):
    def __init__(self, what):
        self.what = what
        super().__init__(f"no cohort data for {what}")

    def __str__(self):
        return self.args[0]


class ZeroDenominator(VaxSignalError, ZeroDivisionError):
    pass


class UnknownStance(VaxSignalError, ValueError):
    pass


class InconsistentData(VaxSignalError, ValueError):
    pass


class ConstantInput(VaxSignalError, ValueError):
    pass


class LengthMismatch(VaxSignalError, ValueError):
    pass


class RankDeficient(VaxSignalError, ValueError):
    pass


class TooFewRows(VaxSignalError, ValueError):
    pass


class TooShort(VaxSignalError, ValueError):
    pass


class SegmentTooShort(VaxSignalError, ValueError):
    pass


class DimensionMismatch(VaxSignalError, ValueError):
    pass


class DegenerateTarget(VaxSignalError, ValueError):
    pass


class NotPositiveDefinite(VaxSignalError, ValueError):
    pass


class NotConverged(VaxSignalError, RuntimeError):
    kind = "convergence"

    def __init__(self, message, gap=None, n_iter=None):
        self.gap = gap
        self.n_iter = n_iter
        super().__init__(message)
