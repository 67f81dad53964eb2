"""Exception types shared across the package.

All of them derive from ValueError through LongicausalError so callers can
catch either the package family or plain ValueError.
"""


class LongicausalError(ValueError):
    """Base class for all errors raised by this package."""


class PanelError(LongicausalError):
    """Panel construction violated an invariant (length mismatch, bad values)."""


class SingularDesignError(LongicausalError):
    """Design matrix is rank deficient, or the bread matrix is singular."""


class DomainError(LongicausalError):
    """An argument is outside the operation's domain (response range, se <= 0, ...)."""


class DegenerateVarianceError(LongicausalError):
    """A fitted treatment model has zero residual variance; densities undefined."""


class PositivityError(LongicausalError):
    """An estimated propensity is numerically 0 or 1 for some unit."""


class WeightError(LongicausalError):
    """A stabilized-weight factor is non-finite for some unit/period."""


class SchemaError(LongicausalError):
    """A CSV input violated its schema. Carries row/column context."""

    def __init__(self, message: str, *, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        full = message if not where else f"{message} ({', '.join(where)})"
        super().__init__(full)
        self.row = row
        self.column = column


class SimulationError(LongicausalError):
    """Simulation cannot proceed (mean overflow, failure budget exceeded)."""
