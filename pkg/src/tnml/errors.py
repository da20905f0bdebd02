"""Exception types shared across the package."""


class TNMLError(Exception):
    """Base class for all package errors."""


class ShapeError(TNMLError, ValueError):
    """Incompatible tensor, network, or dataset shapes."""


class NumericalError(TNMLError, ArithmeticError):
    """A linear-algebra routine failed or produced non-finite values."""


class FormatError(TNMLError):
    """A persisted file could not be decoded.

    ``kind`` is a short machine-readable tag such as ``"bad magic"``,
    ``"unsupported version"``, ``"truncated payload"``, ``"label range"``
    or ``"graph validation"``.
    """

    def __init__(self, kind, detail=""):
        self.kind = kind
        self.detail = detail
        msg = kind if not detail else f"{kind}: {detail}"
        super().__init__(msg)
