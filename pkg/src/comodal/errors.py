"""Shared exception types."""


class WorkbenchError(Exception):
    """Base class for all errors raised by this package."""


class FormulaError(WorkbenchError, ValueError):
    """Malformed formula, unknown operator family, or parameter outside its domain."""


class ParseError(FormulaError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class AtomUniverseError(WorkbenchError, ValueError):
    """A propositional query mixed formulas over different atom universes."""


class BudgetError(WorkbenchError, RuntimeError):
    """A carrier, cap, or instance budget was exceeded."""


class FunctorMismatchError(WorkbenchError, TypeError):
    """An operator, value, or model was used with the wrong signature functor."""


class ConsistencyError(WorkbenchError, ValueError):
    """An operation that requires a consistent input received an inconsistent one."""


class ConstructionError(WorkbenchError, RuntimeError):
    """A closed-form witness construction failed or is not available."""


class UnknownLogicError(WorkbenchError, KeyError):
    """Requested logic name is not in the registry."""


class ModelFormatError(WorkbenchError, ValueError):
    """A coalgebra/model file does not conform to the documented format."""
