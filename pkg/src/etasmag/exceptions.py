"""Exception hierarchy.

Each class carries a ``category`` that the command line front-end maps to
an exit status.
"""


class EtasMagError(Exception):
    category = "ERROR"


class CatalogFormatError(EtasMagError, ValueError):
    """Malformed catalog file. ``line`` is the 1-based line number, if known."""

    category = "VALIDATION"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(EtasMagError, ValueError):
    category = "VALIDATION"


class NumericalError(EtasMagError, ArithmeticError):
    category = "NUMERIC"


class SupercriticalError(NumericalError):
    """Raised by the simulator when the branching ratio is not below one."""
