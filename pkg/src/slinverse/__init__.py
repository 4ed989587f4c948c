"""Direct and inverse spectral analysis of Sturm-Liouville operators on (0, pi)
with regular but not strongly regular two-point boundary conditions."""

from .bc import BoundaryClassification, classify, matrix_from_parameters
from .direct import ProblemCollection, char_determinant, fundamental_system
from .errors import (
    DerivativeUnavailable,
    FitDegenerate,
    IncreaseN,
    InvalidBoundaryForms,
    InvalidPotential,
    KernelDivergence,
    MultipleRootDerivative,
    NotInScope,
    OutOfTheoremScope,
    PipelineError,
    PipelineVerificationFailure,
    RootIsolationFailure,
    SelectionFailure,
    SeriesAssignmentError,
    SpectralError,
    UniqueSolvabilityFailure,
)
from .potential import Potential
from .spectrum import Spectrum, compute_spectrum, dirichlet_spectrum

__version__ = "0.1.0"

__all__ = [
    "BoundaryClassification", "classify", "matrix_from_parameters",
    "ProblemCollection", "char_determinant", "fundamental_system",
    "Potential", "Spectrum", "compute_spectrum", "dirichlet_spectrum",
    "SpectralError", "InvalidBoundaryForms", "NotInScope", "InvalidPotential",
    "RootIsolationFailure", "SeriesAssignmentError", "MultipleRootDerivative",
    "SelectionFailure", "OutOfTheoremScope", "KernelDivergence",
    "UniqueSolvabilityFailure", "IncreaseN", "DerivativeUnavailable", "FitDegenerate",
    "PipelineError", "PipelineVerificationFailure",
]
