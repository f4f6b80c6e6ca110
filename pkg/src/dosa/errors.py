"""Exception hierarchy. Every error raised on purpose derives from ``DosaError``."""


class DosaError(Exception):
    """Base class; carries a short machine-readable ``kind`` for the CLI."""

    kind = "error"


class DimensionError(DosaError, ValueError):
    kind = "dimension"


class ContractError(DosaError, ValueError):
    kind = "contract"


class EvaluationError(DosaError, ArithmeticError):
    kind = "evaluation"


class RangeError(DosaError, ValueError):
    kind = "range"


class LabelDomainError(DosaError, ValueError):
    kind = "label_domain"


class DegenerateMarginError(DosaError, ValueError):
    kind = "degenerate_margin"


class ArffParseError(DosaError, ValueError):
    kind = "parse"

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnsupportedTypeError(DosaError, ValueError):
    kind = "unsupported_type"


class ConfigError(DosaError, ValueError):
    kind = "config"


class StateError(DosaError, RuntimeError):
    kind = "state"


class NonFiniteLossError(DosaError, ArithmeticError):
    kind = "non_finite_loss"


class NothingToReportError(DosaError, FileNotFoundError):
    kind = "nothing_to_report"
