"""Exception hierarchy shared by every module of the package."""


class PowerMeanError(Exception):
    """Base class for all errors raised by :mod:`powermean_ssl`."""


class InputError(PowerMeanError, ValueError):
    """Malformed input: bad shapes, out-of-range indices, unreadable files."""


class DomainError(PowerMeanError, ValueError):
    """A mathematically valid call outside the domain of the function."""


class DegreeError(InputError):
    """A graph layer has a node of zero degree."""

    def __init__(self, node, layer=None):
        self.node = int(node)
        self.layer = layer
        where = "" if layer is None else f" in layer {layer!r}"
        super().__init__(f"node {self.node} is isolated{where}; "
                         "enable the self-loop policy to regularize it")


class ScopeError(DomainError):
    """The request is outside the setting a closed-form result covers."""


class NumericalError(PowerMeanError, ArithmeticError):
    """An iterative method or factorization failed numerically."""


class FactorizationError(NumericalError):
    """Nonpositive pivot during (incomplete) Cholesky factorization."""

    def __init__(self, row, pivot):
        self.row = int(row)
        self.pivot = float(pivot)
        super().__init__(f"nonpositive pivot {self.pivot:.3e} at row {self.row}")


class ConfigError(PowerMeanError, ValueError):
    """Invalid experiment or CLI configuration."""
