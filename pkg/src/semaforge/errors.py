"""Exception hierarchy shared across the toolkit."""


class SemaforgeError(Exception):
    """Base class for all domain errors raised by this package."""


class ShapeMismatchError(SemaforgeError):
    """Rasters that must agree in height/width (or channels) do not."""


class EmptyDatasetError(SemaforgeError):
    """An operation that needs at least one sample received none."""


class InsufficientSamplesError(SemaforgeError):
    """A statistic needs more samples than were provided (e.g. n < 2)."""


class DomainBoundsError(SemaforgeError):
    """A value lies outside its mathematical domain (e.g. probability > 1)."""


class DivergenceError(SemaforgeError):
    """Training produced a non-finite loss."""


class ConfigError(SemaforgeError):
    """An invalid or inconsistent configuration was supplied."""
