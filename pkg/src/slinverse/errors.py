"""Exception hierarchy shared by all modules."""


class SpectralError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class InvalidBoundaryForms(SpectralError):
    pass


class NotInScope(SpectralError):
    """Boundary conditions are not regular-but-not-strongly-regular."""


class InvalidPotential(SpectralError):
    pass


class RootIsolationFailure(SpectralError):
    def __init__(self, message, boxes=()):
        super().__init__(message)
        self.boxes = list(boxes)


class SeriesAssignmentError(SpectralError):
    pass


class MultipleRootDerivative(SpectralError):
    pass


class SelectionFailure(SpectralError):
    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = list(indices)


class OutOfTheoremScope(SpectralError):
    pass


class KernelDivergence(SpectralError):
    pass


class UniqueSolvabilityFailure(SpectralError):
    pass


class IncreaseN(SpectralError):
    """The truncation index is too small for the tail estimate to hold."""


class DerivativeUnavailable(SpectralError):
    pass


class FitDegenerate(SpectralError):
    pass


class PipelineError(SpectralError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class PipelineVerificationFailure(PipelineError):
    def __init__(self, message):
        super().__init__("f", message)
