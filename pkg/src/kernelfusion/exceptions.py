"""Exception types shared across the library."""


class KernelFusionError(Exception):
    """Base class for all library-specific errors."""


class BindingError(KernelFusionError):
    """Objects bound to different function spaces were combined."""


class IndependenceError(KernelFusionError):
    """A feature list failed the numerical linear-independence check."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConstructionError(KernelFusionError):
    """A fusion basis could not be built reliably from the given probes."""


class NotPositiveError(KernelFusionError):
    """A matrix expected to be positive semidefinite has a negative eigenvalue."""


class NotInAgentSpaceError(KernelFusionError):
    """A fusion-space function has no representation in the requested agent space."""


class InternalConsistencyError(KernelFusionError):
    """A guaranteed internal identity failed numerically; indicates a broken basis."""


class StageError(KernelFusionError):
    """Pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
