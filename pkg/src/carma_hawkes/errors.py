"""Exception hierarchy for the package.

Everything raised on purpose derives from :class:`CarmaHawkesError` so callers
(and the CLI) can separate user/input problems from genuine bugs.
"""

from __future__ import annotations


class CarmaHawkesError(Exception):
    """Base class for all errors raised by this package."""


class SpecificationError(CarmaHawkesError):
    """A model specification, order, or event series is malformed."""


class DataError(CarmaHawkesError):
    """Input data (tick files, CSV rows, configuration values) is invalid."""


class EstimationError(CarmaHawkesError):
    """Maximum-likelihood fitting could not produce a usable result."""


class SimulationError(CarmaHawkesError):
    """Simulation failed or exceeded its configured budget."""


class DataWarning(UserWarning):
    """Recoverable data irregularity (tie-shifted timestamps, capped series)."""
