"""Error taxonomy shared by the library and the CLI exit-code map."""


class BoseGasError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BoseGasError):
    """Invalid configuration: bad schema, bad parameter range, unusable settings."""


class BudgetError(BoseGasError):
    """A requested computation exceeds its configured cost budget."""

    def __init__(self, message, cost=None, budget=None):
        super().__init__(message)
        self.cost = cost
        self.budget = budget


class StructuralError(BoseGasError):
    """A configuration or sampler state violates a structural precondition
    (degenerate DLR normalization, retry caps, corrupt links, ...)."""


class NotPermutationWiseError(StructuralError):
    """A bridge set lacks unique successors/predecessors."""
