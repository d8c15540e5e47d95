"""Exception hierarchy shared by all modules."""


class MartApproxError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(MartApproxError, ValueError):
    """Input model fails validation."""


class NonStochasticRow(ValidationError):
    pass


class ReducibleChain(ValidationError):
    pass


class DimensionMismatch(MartApproxError, ValueError):
    pass


class NotCentered(ValidationError):
    pass


class SingularSystem(MartApproxError, ArithmeticError):
    pass


class SeriesNotConverged(MartApproxError, ArithmeticError):
    pass


class InvalidState(MartApproxError, IndexError):
    pass


class EmptyBatch(MartApproxError, ValueError):
    pass


class StateSpaceTooLarge(MartApproxError, ValueError):
    pass


class NotNormalOperator(MartApproxError, ValueError):
    pass


class NotReversible(MartApproxError, ValueError):
    pass


class WeightAtOne(MartApproxError, ArithmeticError):
    pass


class NotRegular(MartApproxError, ValueError):
    pass


class DegenerateVariance(MartApproxError, ArithmeticError):
    pass


class ParseError(MartApproxError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class UnknownCommand(MartApproxError, ValueError):
    pass
