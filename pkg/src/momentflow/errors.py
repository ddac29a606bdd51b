"""Exception types shared across the package."""


class MomentFlowError(Exception):
    """Base class for all errors raised by momentflow."""


class WallPointError(MomentFlowError, ValueError):
    """A point lies on an affine wall where a strict count is undefined."""


class NoConvergenceError(MomentFlowError):
    """The flow reached its time limit before the gradient fell below threshold.

    The partial trajectory is attached as ``record``.
    """

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class InsufficientSamplesError(MomentFlowError):
    pass


class TruncationMismatch(MomentFlowError, ValueError):
    pass


class NonUnitLeadingTerm(MomentFlowError, ValueError):
    pass


class CertificateFailure(MomentFlowError):
    """A Poincare-series certificate check failed.

    ``check`` names the violated property and ``degree`` the first offending
    degree (or ``None`` when the failure is not tied to one coefficient).
    """

    def __init__(self, check, degree=None, detail=""):
        msg = f"certificate check {check!r} failed"
        if degree is not None:
            msg += f" at degree {degree}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.check = check
        self.degree = degree


class SingularOnCircle(MomentFlowError, ValueError):
    pass


class NumericalBreakdown(MomentFlowError):
    def __init__(self, message, stage=None):
        super().__init__(message if stage is None else f"stage {stage}: {message}")
        self.stage = stage
