"""Shared exception and warning types."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class ShapeMismatchError(InvalidArgumentError):
    """Array shapes are inconsistent with each other or with the geometry."""


class NumericalAbortError(RuntimeError):
    """A numerical routine hit a non-finite value and stopped."""


class GuidanceClampWarning(UserWarning):
    """A guidance weight outside [0, 1] was clamped."""
