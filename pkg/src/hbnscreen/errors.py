"""Exception hierarchy shared by all modules."""


class HbnScreenError(Exception):
    """Base class for every error raised by hbnscreen."""


class InvalidArgumentError(HbnScreenError, ValueError):
    pass


class DefectConflictError(HbnScreenError):
    """An edit targets a site that is already vacant or edited."""


class UnknownSpeciesError(HbnScreenError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ParseError(HbnScreenError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class DuplicateRecordError(ParseError):
    pass


class ConvergenceError(HbnScreenError):
    """SCF did not converge; ``history`` holds (energy change, potential residual) per iteration."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class FitError(HbnScreenError):
    pass


class NoGapError(HbnScreenError):
    pass


class NoTransitionError(HbnScreenError):
    def __init__(self, message, strain=None):
        super().__init__(message)
        self.strain = strain


class BracketError(HbnScreenError):
    """Target wavelength is not bracketed; ``achievable`` is the (min, max) wavelength seen."""

    def __init__(self, message, achievable=None):
        super().__init__(message)
        self.achievable = achievable


class InsufficientDataError(HbnScreenError):
    pass
