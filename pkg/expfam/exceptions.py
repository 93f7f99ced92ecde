class DomainError(ValueError):
    """A mean (or threshold argument) lies outside the domain of the function called."""


class ArgumentError(ValueError):
    """An argument is well typed but not admissible (negative budget, empty subset...)."""


class PosteriorStateError(RuntimeError):
    """The posterior is improper, e.g. a Gaussian arm under the flat prior with no sample."""
