"""Exception hierarchy for the massbalance package.

Everything raised on purpose derives from :class:`MassBalanceError`, so callers
can catch one type at the boundary.  Validation problems additionally derive
from ``ValueError`` to stay friendly to generic callers.
"""

from __future__ import annotations


class MassBalanceError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(MassBalanceError, ValueError):
    """An argument failed a documented precondition (shape, range, finiteness)."""


class InvalidBatchError(MassBalanceError, ValueError):
    """A rollout batch is internally inconsistent or disagrees with the distribution."""


class UnsupportedRewardError(MassBalanceError, ValueError):
    """An operation restricted to +1/-1 rewards was called with something else."""


class ScenarioError(MassBalanceError, ValueError):
    """A scenario or config document failed validation.

    Carries *all* violations found, not just the first, so a user can fix a
    file in one pass.  Each diagnostic is a ``(code, message)`` pair.
    """

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = [f"[{code}] {msg}" for code, msg in self.diagnostics]
        super().__init__("scenario validation failed:\n  " + "\n  ".join(lines))


class SimulationDivergedError(MassBalanceError, ArithmeticError):
    """Logits left the finite range during a simulated trajectory."""
