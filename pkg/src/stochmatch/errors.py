"""Exception types raised across the package.

Every error that callers are expected to catch derives from
:class:`StochMatchError`; validation errors carry enough context to point at
the offending entity.
"""

from __future__ import annotations


class StochMatchError(Exception):
    """Base class for all package-specific errors."""


class InvalidInstance(StochMatchError):
    """Structural problem not covered by a more specific error."""


class NegativeWeight(InvalidInstance):
    def __init__(self, offline_id: int, weight) -> None:
        super().__init__(f"offline vertex {offline_id} has negative weight {weight}")
        self.offline_id = offline_id
        self.weight = weight


class MassNotNormalized(InvalidInstance):
    def __init__(self, arrival: int, total) -> None:
        super().__init__(f"arrival {arrival}: masses sum to {total}, expected 1")
        self.arrival = arrival
        self.total = total


class NeighborOutOfRange(InvalidInstance):
    def __init__(self, arrival: int, type_id: int, neighbor: int, n_offline: int) -> None:
        super().__init__(
            f"arrival {arrival}, type {type_id}: neighbor {neighbor} outside offline "
            f"range [0, {n_offline})"
        )
        self.arrival = arrival
        self.type_id = type_id
        self.neighbor = neighbor


class MuOutOfRange(StochMatchError):
    def __init__(self, mu) -> None:
        super().__init__(f"mu must lie in (0, 1], got {mu}")
        self.mu = mu


class BudgetExceeded(StochMatchError):
    def __init__(self, required: int, budget: int) -> None:
        super().__init__(f"enumeration needs {required} evaluations, budget is {budget}")
        self.required = required
        self.budget = budget


class EmptyConditioning(StochMatchError):
    """The conditioned type assignment has zero probability mass."""


class NotIID(StochMatchError):
    """Operation requires identical arrival distributions."""


class MassExceedsOne(StochMatchError):
    def __init__(self, total) -> None:
        super().__init__(f"fraction vector sums to {total} > 1")
        self.total = total


class ConcavityViolation(StochMatchError):
    def __init__(self, y: float, value: float) -> None:
        super().__init__(f"second derivative {value} is not negative at y={y}")
        self.y = y
        self.value = value


class BoundViolated(StochMatchError):
    def __init__(self, y: float, gap: float) -> None:
        super().__init__(f"quadratic exceeds target by {gap} at y={y}")
        self.y = y
        self.gap = gap


class LemmaViolated(StochMatchError):
    def __init__(self, name: str, gap) -> None:
        super().__init__(f"inequality {name} violated with gap {gap}")
        self.name = name
        self.gap = gap


class EpsilonOutOfRange(StochMatchError):
    def __init__(self, epsilon, limit) -> None:
        super().__init__(f"split mass {epsilon} outside (0, {limit}]")
        self.epsilon = epsilon
        self.limit = limit


class TypeNotInRule(StochMatchError):
    def __init__(self, arrival: int) -> None:
        super().__init__(f"arrival {arrival} has no type selected by the rule")
        self.arrival = arrival


class ConfigError(StochMatchError):
    """Bad or inconsistent command-line / config-file input."""
