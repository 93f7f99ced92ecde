class RuleConfigError(ValueError):
    """A rule configuration cannot run on the instance it was given (horizon below K, GLRT budget too small)."""
