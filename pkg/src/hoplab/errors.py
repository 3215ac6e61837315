"""Exception types shared across the simulation modules."""


class HoplabError(Exception):
    """Base class for all package errors."""


class IntegrationFault(HoplabError):
    """A vector field or integrated state became non-finite."""

    def __init__(self, t, state, message="non-finite state"):
        super().__init__(f"{message} at t={t!r}, state={tuple(state)!r}")
        self.t = t
        self.state = tuple(state)


class SimulationFault(HoplabError):
    """The simulated body left the physically meaningful region (e.g. fell through the floor)."""

    def __init__(self, t, state, message):
        super().__init__(f"{message} at t={t!r}, state={tuple(state)!r}")
        self.t = t
        self.state = tuple(state)


class BracketError(HoplabError, ValueError):
    """Event localization was asked to refine a bracket without a sign change."""


class GaitFailure(HoplabError):
    """A return map could not be completed. Not a numerical error: an outcome of the gait."""


class NoLiftoff(GaitFailure):
    """Stance never ended: the controller could not lift the body off the ground."""


class Fall(GaitFailure):
    """The body collapsed (leg singularity or body below the ground) during a stride."""


class FixedPointError(HoplabError):
    """A fixed-point iteration did not converge. Carries the iterate history."""

    def __init__(self, message, history):
        super().__init__(f"{message} (after {len(history)} iterates, last={history[-1] if history else None!r})")
        self.history = list(history)


class ContractViolation(HoplabError, ValueError):
    """An operation was called outside its precondition (e.g. policy for a missing limb)."""


class DomainError(HoplabError, ValueError):
    """A formula was evaluated outside its mathematical domain."""


class ConfigError(HoplabError, ValueError):
    """Malformed or invalid experiment configuration."""
