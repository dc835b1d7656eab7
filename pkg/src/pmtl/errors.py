"""Exception taxonomy shared across the package.

Every error raised by the library derives from PmtlError and carries the
process exit code the CLI should use: 1 for usage/config problems, 2 for
data problems, 3 for numerical failures.
"""


class PmtlError(Exception):
    exit_code = 3


class ConfigError(PmtlError):
    """Bad configuration or CLI usage."""

    exit_code = 1


class DataError(PmtlError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class DataFormatError(DataError):
    """Parse failure in a data file; carries the offending line number."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class IdMismatchError(DataError):
    """Sample id sets disagree between two inputs."""

    def __init__(self, message, missing_left=(), missing_right=()):
        super().__init__(message)
        self.missing_left = tuple(missing_left)
        self.missing_right = tuple(missing_right)


class ShapeError(PmtlError, ValueError):
    """Operand shapes are incompatible; names both shapes."""

    def __init__(self, op, shape_a, shape_b=None):
        if shape_b is None:
            msg = f"{op}: bad shape {tuple(shape_a)}"
        else:
            msg = f"{op}: incompatible shapes {tuple(shape_a)} and {tuple(shape_b)}"
        super().__init__(msg)
        self.op = op
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b) if shape_b is not None else None


class NumericalError(PmtlError):
    """Non-finite value or other numerical breakdown."""

    exit_code = 3


class MissingClassError(PmtlError, ValueError):
    """A class id never occurs in the reference labels, so per-class recall
    is undefined."""

    def __init__(self, absent_classes):
        absent = tuple(sorted(absent_classes))
        super().__init__(f"recall undefined: classes {absent} absent from reference labels")
        self.absent_classes = absent


class PerfectRegressionError(PmtlError, ValueError):
    """Mean absolute error of exactly zero; its reciprocal is undefined and
    on real data this signals a broken fixture."""

    def __init__(self):
        super().__init__("MAE is exactly 0; inverted MAE is undefined")
