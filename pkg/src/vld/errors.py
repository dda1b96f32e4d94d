"""Exception taxonomy shared across the package.

The CLI maps these to distinct exit codes; library code raises them
directly so callers can tell misconfiguration from bad data from bugs.
"""


class VldError(Exception):
    """Base class for all package-defined errors."""


class ConfigError(VldError):
    """Invalid configuration: bad dimensions, unknown keys, bad flags."""


class ShapeError(VldError):
    """Tensor operands with incompatible extents."""


class ContractError(VldError):
    """A documented operation precondition was violated by the caller."""


class DataError(VldError):
    """Datasets, labels, or batches that violate the data contract."""


class DivergenceError(VldError):
    """Training produced a non-finite loss."""


class ParseError(VldError):
    """Malformed on-disk artifact (config file, CSV, checkpoint)."""
