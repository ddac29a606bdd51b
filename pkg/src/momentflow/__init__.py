"""Moment-map gradient flows, boundary operators and loop factorizations for SU(2)."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    CertificateFailure,
    InsufficientSamplesError,
    MomentFlowError,
    NoConvergenceError,
    NonUnitLeadingTerm,
    NumericalBreakdown,
    SingularOnCircle,
    TruncationMismatch,
    WallPointError,
)
