"""Exception hierarchy.

Every error carries the process exit code the command line front end
reports for it.
"""


class UnshieldedError(Exception):
    exit_code = 1


class ConfigurationError(UnshieldedError, ValueError):
    """Invalid configuration value or unknown key.

    ``path`` is the dotted location of the offending field, ``line`` the
    line number in the source file for parse errors.
    """

    exit_code = 2

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path:
            prefix += f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class ShapeError(UnshieldedError, ValueError):
    exit_code = 2


class StencilError(UnshieldedError, ValueError):
    exit_code = 2


class HistoryError(UnshieldedError, ValueError):
    exit_code = 2


class FitError(UnshieldedError, ValueError):
    exit_code = 2


class DomainError(UnshieldedError, ValueError):
    exit_code = 2


class UndefinedPointError(UnshieldedError, ValueError):
    exit_code = 2


class InadmissibleDataError(UnshieldedError):
    """Initial data failed an admissibility gate."""

    exit_code = 2

    def __init__(self, message, report=None, margin=None):
        self.report = report
        self.margin = margin
        super().__init__(message)


class DegenerateMetricError(UnshieldedError):
    """The metric is singular (or lost Lorentz signature) somewhere."""

    exit_code = 4

    def __init__(self, message, det=None, location=None, slice_index=None):
        self.det = det
        self.location = location
        self.slice_index = slice_index
        super().__init__(message)


class SignatureLossError(DegenerateMetricError):
    exit_code = 4


class ContractionError(UnshieldedError):
    """Picard ratios stayed at or above one."""

    exit_code = 3

    def __init__(self, message, record=None):
        self.record = record
        super().__init__(message)


class DivergenceError(ContractionError):
    exit_code = 3


class ResolutionError(UnshieldedError, ValueError):
    exit_code = 2


class ReportIOError(UnshieldedError, OSError):
    exit_code = 5

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
