"""Error taxonomy shared across the package.

CLI exit-code mapping: ConfigError -> 2, NumericalError -> 3.
"""


class LamdaError(Exception):
    pass


class ShapeError(LamdaError):
    """Operand dimensions do not line up."""


class ConfigError(LamdaError):
    """Invalid configuration, schema violation, or out-of-range argument."""


class ContractError(LamdaError):
    """An API precondition was violated (e.g. non-scalar loss)."""


class NumericalError(LamdaError):
    """Numerical failure: non-convergence, NaN/Inf in a documented-finite place."""
