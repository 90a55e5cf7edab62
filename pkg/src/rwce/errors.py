"""Exception types raised across the package."""


class RWCEError(Exception):
    """Base class for every error raised by :mod:`rwce`."""


class GraphStructureError(RWCEError):
    """A neighbor generator produced an asymmetric list, a self-loop or an isolated vertex."""


class ProbeRadiusError(RWCEError):
    pass


class IncompleteConfigError(RWCEError):
    pass


class DomainError(RWCEError, ValueError):
    """A conductance was zero, negative or not finite."""


class ImproperConfigError(DomainError):
    pass


class ConnectivityError(RWCEError):
    pass


class ConsistencyError(RWCEError):
    """An internal identity was violated beyond round-off."""


class AbsorptionError(RWCEError):
    pass


class ScheduleExhaustedError(RWCEError):
    pass


class DegenerateVoltageError(RWCEError):
    pass


class PreconditionError(RWCEError):
    pass


class OracleUnsupportedError(RWCEError):
    pass


class CapExceededError(RWCEError):
    pass


class TruncationExceededError(RWCEError):
    """The walk needed a ball larger than the configured maximum radius.

    ``partial`` holds whatever was simulated before the limit was hit.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
