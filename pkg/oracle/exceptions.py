class DegenerateInstanceError(ValueError):
    """The minimum mean equals the threshold, so neither hypothesis holds."""


class SideError(ValueError):
    """The bound is only stated for instances whose minimum lies below the threshold."""


class UnsupportedInstanceError(ValueError):
    """The instance falls outside the family or shape a formula is stated for."""
