"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration errors exit 2,
numerical errors exit 3, invariant violations exit 4.
"""


class StructuralError(ValueError):
    """Inputs have incompatible shapes or malformed structure."""


class ConfigurationError(ValueError):
    """A parameter or file reference is invalid before any numerics run."""


class NumericalError(RuntimeError):
    """A numeric routine failed to produce a usable result."""


class InvariantViolation(RuntimeError):
    """A validated artifact broke one of its documented invariants."""


class ImpossibleObservationError(NumericalError):
    """A Bayes update was asked to condition on a zero-likelihood observation."""
