"""Exception hierarchy shared by every LAD module."""


class LadError(ValueError):
    """Base class for all errors raised by this package."""


class DomainError(LadError):
    """An argument lies outside the domain of the operation."""


class StateError(LadError):
    """The detector reached a state in which it cannot continue."""


class FormatError(LadError):
    """An input file could not be parsed into the expected structure."""


class ConfigError(LadError):
    """A configuration value is out of its allowed range."""
