"""Exception types raised by the library."""


class ParameterError(ValueError):
    """Invalid model, window or study parameter."""


class DomainError(ValueError):
    """Operation called outside its domain (e.g. a node paired with itself)."""


class UnsupportedModelError(ValueError):
    """No closed form is available for the requested model combination."""


class DivergentModelError(UnsupportedModelError):
    """The requested quantity is infinite for these parameters."""
