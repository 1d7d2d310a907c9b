"""
Exception hierarchy shared by every module.
"""


class GlassyIsingError(Exception):
    """Base class for all domain failures."""


class PackingFailure(GlassyIsingError):
    """Random sequential adsorption ran out of insertion attempts."""


class DegenerateGeometry(GlassyIsingError):
    """Two spins sit at the same position."""


class InsufficientSpins(GlassyIsingError):
    pass


class TooLarge(GlassyIsingError):
    """State vector would exceed the supported number of spins."""


class DomainError(GlassyIsingError):
    """Closed-form results requested outside alpha >= d."""


class QuadratureFailure(GlassyIsingError):
    pass


class InsufficientData(GlassyIsingError):
    pass


class DegenerateCurve(GlassyIsingError):
    """Curve shows no decay inside the fit window."""


class NonPositiveValue(GlassyIsingError):
    pass
