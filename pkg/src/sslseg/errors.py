"""Exception hierarchy shared by every stage of the toolkit."""


class SSLSegError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(SSLSegError, ValueError):
    """A caller passed a value outside an operation's contract."""


class NumericError(SSLSegError, ArithmeticError):
    """A numerical routine produced an unusable result."""


class FormatError(SSLSegError):
    """A file could not be parsed."""


class BadMagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncationError(FormatError):
    pass


class ConsistencyError(FormatError):
    """A parsed file is well-formed but internally inconsistent."""
