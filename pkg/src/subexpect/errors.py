"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration: bad grids, empty scenario sets, malformed configs."""


class NumericsError(ArithmeticError):
    """A computation produced non-finite values or left its stable regime."""


class PolicyBoundsError(ConfigurationError):
    """An adversary policy tried to select parameters outside the family bounds."""
