"""Exception types shared across the package."""


class VarmaCausalError(Exception):
    """Base class for all domain errors raised by this package."""


class GraphError(VarmaCausalError):
    """Invalid graph construction or graph operation (cycles, unknown nodes, ...)."""


class ModelError(VarmaCausalError):
    """Invalid process specification (shapes, instability, cyclic instantaneous part)."""


class EstimationError(VarmaCausalError):
    """Numerical failure during estimation (singular moment matrices, divergence)."""


class UnderIdentifiedError(EstimationError):
    """The moment system does not pin down the causal effect (rank deficiency)."""

    def __init__(self, message, rank=None, required=None):
        super().__init__(message)
        self.rank = rank
        self.required = required
