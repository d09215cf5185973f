__all__ = (
    'MaecException', 'FieldFormatError', 'ValidationError',
    'ConvergenceError', 'NumericalError', 'UsageError',
)


class MaecException(Exception):
    """The base class for all maec exceptions."""


class FieldFormatError(MaecException):
    """Thrown when a field file does not follow the MAEC binary format.

    Attributes:
        path (str): The offending file.
        reason (str): What was wrong with it.

    """
    def __init__(self, path, reason: str, *args):
        self.path = str(path)
        self.reason = reason
        super().__init__(f'{self.path}: {reason}', *args)


class ValidationError(MaecException, ValueError):
    """Thrown when an argument has an invalid value, e.g. negative counts
    or fields whose dims do not match."""


class ConvergenceError(MaecException):
    """Thrown when a Newton or Halley kernel exhausts its iteration cap.

    Attributes:
        kernel (str): The name of the kernel that failed.
        iterations (int): The number of iterations performed.
        residual (float): The largest step magnitude left when giving up.

    """
    def __init__(self, kernel: str, iterations: int, residual: float, *args):
        self.kernel = kernel
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f'{kernel} did not converge after {iterations} iterations '
            f'(residual {residual:.3e})',
            *args
        )


class NumericalError(MaecException):
    """Thrown when an iterative solver produces non-finite values."""


class UsageError(MaecException):
    """Thrown for command line misuse that argparse cannot catch by itself."""
