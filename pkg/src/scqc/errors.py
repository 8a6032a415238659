"""Exception hierarchy shared by all scqc modules."""


class SCQCError(Exception):
    """Base class for domain errors raised by scqc.

    ``payload`` carries a JSON-serialisable dict that the command line
    front end writes out as the machine-readable error record.
    """

    def __init__(self, message, **payload):
        super().__init__(message)
        self.payload = payload


class DomainError(SCQCError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateCurveError(SCQCError):
    """The curve has (numerically) vanishing speed somewhere."""


class FrameAmbiguityError(SCQCError):
    """The Frenet normal is undefined over a non-negligible stretch."""


class CapacityError(SCQCError):
    """A requested drive strength exceeds the device limit."""


class ResolutionError(SCQCError):
    """A requested sample period is too coarse for the pulse."""


class InputError(SCQCError, ValueError):
    """Malformed numeric input (non-finite samples, non-unitary matrices...)."""


class ConvergenceError(SCQCError):
    """Pulse synthesis did not meet its certificates within budget."""


class ReconstructionError(SCQCError):
    """Tomographic inversion failed."""


class FitError(SCQCError):
    """Randomized-benchmarking decay fit failed."""
