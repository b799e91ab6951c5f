"""Exception types shared across the package."""


class ModelError(ValueError):
    """A model emitted an invalid transition structure."""


class ConfigError(ValueError):
    """Invalid CLI or config-file input."""


class StateBudgetExceeded(RuntimeError):
    """Preprocessing discovered more states than the configured budget."""


class GoalUnreachableError(RuntimeError):
    """The goal state is unreachable from the initial state (probability 0)."""


class ConvergenceError(RuntimeError):
    """An iterative numerical solve failed to converge within its cap."""
