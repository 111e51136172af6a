"""Exception types raised across the package.

Every error carries a machine-readable ``details`` dict so the CLI can
serialize it to JSON without knowing the concrete class.
"""


class SafeBudgetError(Exception):
    """Base class for all package errors."""

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self), **self.details}


class ModelError(SafeBudgetError, ValueError):
    """The MDP description violates a structural requirement."""


class ProbabilityNotNormalized(ModelError):
    def __init__(self, s, a, total):
        super().__init__(
            f"probabilities for ({s}, {a}) sum to {total!r}, expected 1",
            s=s, a=a, sum=total,
        )


class TerminalNotAbsorbing(ModelError):
    def __init__(self, terminal, action=None):
        super().__init__(
            f"terminal state {terminal!r} must self-loop with p=1, d=0, r=0"
            + (f" under action {action!r}" if action is not None else ""),
            terminal=terminal, action=action,
        )


class TerminalUnreachable(ModelError):
    def __init__(self, state):
        super().__init__(f"terminal state cannot be reached from {state!r}", state=state)


class DuplicateEntry(ModelError):
    def __init__(self, s, a, s_next, d):
        super().__init__(
            f"duplicate transition entry ({s}, {a}) -> ({s_next}, d={d})",
            s=s, a=a, s_next=s_next, d=d,
        )


class UnknownIdentifier(ModelError):
    def __init__(self, name):
        super().__init__(f"unknown identifier {name!r}", name=name)


class InvalidProbability(ModelError):
    def __init__(self, value, reason="must lie in (0, 1]"):
        super().__init__(f"invalid probability {value!r}: {reason}", value=value)


class InvalidParameter(SafeBudgetError, ValueError):
    def __init__(self, name, value, reason):
        super().__init__(f"invalid {name}={value!r}: {reason}", name=name, value=value)


class DimensionMismatch(SafeBudgetError, ValueError):
    def __init__(self, expected, got):
        super().__init__(f"dimension mismatch: expected {expected}, got {got}",
                         expected=list(expected), got=list(got))


class Infeasible(SafeBudgetError):
    """No feasible action exists at the start state for the given budget."""

    def __init__(self, state, delta):
        super().__init__(f"no feasible action at state {state!r} with budget {delta}",
                         state=state, delta=delta)


class PolicyUndefined(SafeBudgetError, LookupError):
    def __init__(self, s, k):
        super().__init__(f"policy has no action at (state={s}, budget={k})", s=s, k=k)


class SamplerFailure(SafeBudgetError, RuntimeError):
    pass


class NotConvergedWarning(RuntimeWarning):
    """Value iteration stopped at ``max_iter`` above the residual tolerance."""
