"""Exception hierarchy shared by every module of the package."""


class CpwlStabError(Exception):
    """Base class for all package errors."""


class DimensionError(CpwlStabError, ValueError):
    """Shape mismatch or non-square input where a square matrix is required."""


class ConvergenceError(CpwlStabError, RuntimeError):
    """An iterative routine hit its iteration cap."""


class ContractError(CpwlStabError, ValueError):
    """An input violates a documented precondition (e.g. asymmetry)."""


class NotApplicableError(CpwlStabError):
    """The certificate cannot be built, typically because F is not Hurwitz."""


class DomainError(CpwlStabError, ArithmeticError):
    """Expression evaluation left the real domain (division by zero, sqrt < 0, overflow)."""


class SystemSyntaxError(CpwlStabError, ValueError):
    """Malformed system-definition document."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        where = f"line {line}, col {col}: " if line else ""
        super().__init__(f"{where}{message}")


class UnknownIdentifierError(SystemSyntaxError):
    pass


class DimensionMismatchError(SystemSyntaxError):
    pass


class EquilibriumError(CpwlStabError, ValueError):
    """The parsed field does not vanish at the origin."""


class PartitionError(CpwlStabError, ValueError):
    """Degenerate box or broken simplicial partition."""
