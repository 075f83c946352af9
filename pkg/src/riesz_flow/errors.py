"""Exception types shared across the package."""


class RieszFlowError(Exception):
    """Base class for all riesz-flow errors."""


class ConfigError(RieszFlowError, ValueError):
    """Invalid parameters, option combinations, or run configuration."""


class ValidationError(RieszFlowError, ValueError):
    """Data failed a structural invariant (geometry tables, kernel axioms, file contents)."""


class NumericalError(RieszFlowError, RuntimeError):
    """A numerical procedure failed in a way that is not a plain blow-up flag."""
