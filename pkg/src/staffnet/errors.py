"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all pipeline failures."""


class InputError(PipelineError):
    """Unusable input: missing files, malformed registries, bad configuration."""


class GeocodeError(InputError):
    """A geocoder client could not resolve an address to valid coordinates."""

    def __init__(self, address: str, reason: str = "address not found"):
        super().__init__(f"geocode failed for {address!r}: {reason}")
        self.address = address


class ConvergenceError(PipelineError):
    """An iterative solver ran out of iterations before meeting tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
