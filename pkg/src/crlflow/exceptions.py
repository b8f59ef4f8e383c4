class CrlError(Exception):
    """Base class for all errors raised by crlflow."""


class InputError(CrlError, ValueError):
    pass


class NumericError(CrlError, ArithmeticError):
    pass


class GenerationError(CrlError, RuntimeError):
    pass


class FormatError(CrlError, ValueError):
    pass


class TrainingError(CrlError, RuntimeError):
    pass


class SearchError(CrlError, RuntimeError):
    pass


class EvaluationError(CrlError, ValueError):
    pass


class ConfigError(CrlError, ValueError):
    pass
