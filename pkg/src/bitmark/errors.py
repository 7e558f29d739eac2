"""Exception hierarchy. Each class maps to one failure kind callers can catch."""


class BitmarkError(Exception):
    pass


class DomainError(BitmarkError, ValueError):
    """Argument outside its valid domain."""


class SizeMismatchError(BitmarkError, ValueError):
    pass


class ContractError(BitmarkError, ValueError):
    """Precondition of an operation violated (e.g. ineffective prefix)."""


class NumericError(BitmarkError, ArithmeticError):
    pass


class StreamError(BitmarkError):
    """Logit source exhausted or misused."""


class StructureError(BitmarkError, ValueError):
    """Malformed bit stream or stream file."""


class ConfigError(BitmarkError, ValueError):
    pass


class CalibrationError(BitmarkError):
    pass


class StatisticsError(BitmarkError, ValueError):
    pass


class UnsupportedError(BitmarkError, NotImplementedError):
    pass
