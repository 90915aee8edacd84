"""Exception types raised by odemap."""

import numpy as np


class OdeMapError(Exception):
    """Base class for all odemap errors."""


class ConfigError(OdeMapError, ValueError):
    """Invalid model, problem or solver configuration."""


class SingularMatrixError(OdeMapError, np.linalg.LinAlgError):
    """A symmetric system stayed singular after the full jitter escalation."""


class NoStationaryDistributionError(OdeMapError, ValueError):
    """The drift matrix is not Hurwitz, so no stationary covariance exists."""


class _IndexedError(OdeMapError):
    def __init__(self, index, detail="", context=""):
        self.index = index
        self.detail = detail
        self.context = context
        super().__init__(self._message())

    def _message(self):
        msg = f"{self.what} at mesh index {self.index}"
        if self.detail:
            msg += f" ({self.detail})"
        if self.context:
            msg += f" [{self.context}]"
        return msg

    def annotate(self, context):
        """Return a copy carrying solver context (method, iteration)."""
        return type(self)(self.index, self.detail, context)


class SingularInnovationError(_IndexedError):
    """The innovation covariance S of a measurement update is numerically singular."""

    what = "singular innovation covariance"


class SingularPredictionError(_IndexedError):
    """A predicted covariance could not be inverted for the smoother gain.

    Typical cause: Q(h) numerically singular for very small steps.
    """

    what = "singular predicted covariance"


class ReferenceFailureError(OdeMapError):
    """The reference integrator missed its self-consistency target."""


class RateFitError(OdeMapError, ValueError):
    """Too few usable rows to fit a convergence rate."""
