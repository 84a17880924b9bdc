"""Exception hierarchy shared across the package."""


class MsamError(Exception):
    """Base class for every error raised by msam."""


class InvalidInputError(MsamError, ValueError):
    pass


class ParameterError(MsamError, ValueError):
    pass


class VariableLookupError(MsamError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class AssemblyError(MsamError):
    pass


class SingularSystemError(MsamError):
    """The normal equations are not positive definite.

    ``variable`` names the offending block when it could be identified.
    """

    def __init__(self, message, variable=None):
        super().__init__(message)
        self.variable = variable


class NonConvergenceError(MsamError):
    """Damping exceeded its ceiling; ``result`` holds the best iterate reached."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DegenerateSampleError(MsamError):
    pass


class InsufficientDataError(MsamError):
    pass


class AlignmentError(MsamError):
    pass


class ParseError(MsamError):
    def __init__(self, message, path=None, line=None):
        where = f"{path}:{line}: " if line is not None else ""
        super().__init__(where + message)
        self.path = path
        self.line = line


class SyncError(MsamError):
    pass
