"""Exception hierarchy shared by all modules."""


class OUCLError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(OUCLError):
    """Invalid experiment configuration.

    ``pointer`` is a JSON pointer to the offending part of the config.
    """

    exit_code = 2

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class GateError(OUCLError):
    """A model fails a hypothesis required by the requested experiment."""

    exit_code = 3

    def __init__(self, message, hypothesis=""):
        super().__init__(message)
        self.hypothesis = hypothesis


class SpectralGateError(GateError):
    pass


class AccuracyError(OUCLError):
    """A numerical routine could not reach its accuracy target."""

    exit_code = 4


class MatrixOverflowError(AccuracyError):
    pass


class UnboundedSearchError(AccuracyError):
    pass


class PreconditionError(OUCLError, ValueError):
    pass


class RepresentationError(OUCLError, TypeError):
    pass


class DegenerateError(OUCLError, ValueError):
    pass


class ModeError(OUCLError, ValueError):
    pass
