"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`StyleFieldError`; the CLI maps the three top-level families to exit
codes (usage 2, domain 3, I/O and format 4).
"""


class StyleFieldError(Exception):
    """Base class for all package errors."""


class DomainError(StyleFieldError, ValueError):
    """Input violates a mathematical precondition of an operation."""


class OutOfDomainError(DomainError):
    """Query point lies outside the grid bounding box."""


class NonFiniteInputError(DomainError):
    """Input contains NaN or infinity."""


class ShapeError(DomainError):
    """Array shapes or channel counts do not line up."""


class ResourceError(StyleFieldError, MemoryError):
    """Requested allocation exceeds a configured cap."""


class ContractError(StyleFieldError, RuntimeError):
    """API used out of order or in the wrong mode."""


class DivergenceError(StyleFieldError, RuntimeError):
    """Optimization blew up."""


class ConfigError(StyleFieldError, ValueError):
    """Configuration file failed validation."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = []
        if path:
            where.append(f"at '{path}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(message + (f" ({', '.join(where)})" if where else ""))


class FormatError(StyleFieldError, ValueError):
    """Binary file could not be parsed."""

    code = 10


class BadMagicError(FormatError):
    code = 11


class BadVersionError(FormatError):
    code = 12


class TruncatedError(FormatError):
    code = 13

    def __init__(self, message, tag=None):
        self.tag = tag
        super().__init__(message)


class DimensionMismatchError(FormatError):
    code = 14


class CorruptValueError(FormatError):
    code = 15
