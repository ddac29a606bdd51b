"""Equivariant Morse stratification bookkeeping for SU(2) with one marking.

The surface has genus ``g`` and a single marked point with holonomy ``-1``
(alcove value ``mu = 1/2``).  Cutting along a circle around the marking, the
loop-group equivariant Poincare series of the framed moduli space is

    (1 + t^3)^(2g) / ((1 - t^2)(1 - t^4))

and the unstable critical components ``C_lam`` (``lam = 1, 2, ...``) each
contribute ``t^(2 d) (1 + t)^(2g) / (1 - t^2)`` with Morse index
``d = g + 2 lam - 2``.  The stratification is equivariantly perfect, so the
Poincare polynomial of the reduced space is the difference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from . import liecore
from .errors import CertificateFailure
from .series import TruncatedSeries, series_div_exact, series_inv_one_minus

MU_HALF = Fraction(1, 2)


@dataclass(frozen=True)
class StratumDescriptor:
    lam: int
    index: int
    equivariant_series: TruncatedSeries


def equivariant_total(g, T):
    """``(1 + t^3)^(2g) / ((1 - t^2)(1 - t^4))`` modulo ``t^(T+1)``."""
    if g < 0:
        raise ValueError("genus must be nonnegative")
    num = TruncatedSeries.binomial_power(3, 2 * g, T)
    return num * series_inv_one_minus(2, T) * series_inv_one_minus(4, T)


def component_series(g, T):
    """Equivariant series ``(1 + t)^(2g) / (1 - t^2)`` of one critical component."""
    return TruncatedSeries.binomial_power(1, 2 * g, T) * series_inv_one_minus(2, T)


def index_of_stratum(g, lam, mu=MU_HALF):
    """Morse index of the norm-square at ``C_lam``.

    The torus directions of the holonomy description contribute ``g``; the
    loop directions contribute one for each affine wall separating the two
    boundary values ``lam`` and ``mu``.
    """
    if lam < 1:
        raise ValueError("lam must be a positive integer")
    a = liecore.lambda_to_alcove_scale(lam)
    b = liecore.lambda_to_alcove_scale(mu)
    return g + liecore.separating_hyperplane_count(a, b, strict=False)


def stratum_contribution(g, lam, T):
    """``t^(2(2 lam + g - 2)) (1 + t)^(2g) / (1 - t^2)`` modulo ``t^(T+1)``."""
    if lam < 1:
        raise ValueError("lam must be a positive integer")
    shift = 2 * (2 * lam + g - 2)
    if shift > T:
        return TruncatedSeries.zero(T)
    return component_series(g, T).shift(shift)


def critical_components(mu, lambda_max):
    """Labels ``lam`` of the unstable critical components up to ``lambda_max``.

    Each component contains a point whose boundary values are ``(lam, mu)``
    with ``lam`` a positive coweight; for SU(2) these are the positive
    integers.
    """
    mu = Fraction(mu) if not isinstance(mu, float) else mu
    if not (0 < mu <= MU_HALF):
        raise ValueError("marking must lie in (0, 1/2]")
    return [lam for lam in range(1, lambda_max + 1) if liecore.is_coweight(lam)]


def closed_form(g, T):
    """``((1+t^3)^(2g) - (1+t)^(2g) t^(2g)) / ((1-t^2)(1-t^4))`` as a series."""
    num = TruncatedSeries.binomial_power(3, 2 * g, T) - TruncatedSeries.binomial_power(
        1, 2 * g, T
    ).shift(2 * g)
    den = TruncatedSeries.binomial_power(2, 1, T, sign=-1) * TruncatedSeries.binomial_power(
        4, 1, T, sign=-1
    )
    return series_div_exact(num, den).quotient


def default_truncation(g):
    return 6 * g + 6


def minimal_lambda_max(g, T):
    """Smallest ``lambda_max`` with ``T <= 2(2 lambda_max + g - 2) - 1``."""
    lm = 1
    while T > 2 * (2 * lm + g - 2) - 1:
        lm += 1
    return lm


@dataclass
class Certificate:
    polynomial: bool
    nonnegative: bool
    palindromic: bool
    matches_closed_form: bool
    top_degree: int
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures

    def as_dict(self):
        return {
            "polynomial": self.polynomial,
            "nonnegative": self.nonnegative,
            "palindromic": self.palindromic,
            "matches_closed_form": self.matches_closed_form,
        }

    def raise_if_failed(self):
        if self.failures:
            check, degree, detail = self.failures[0]
            raise CertificateFailure(check, degree, detail)


@dataclass
class ReducedPoincare:
    g: int
    lambda_max: int
    order: int
    series: TruncatedSeries
    strata: list
    certificate: Certificate

    @property
    def betti(self):
        top = self.certificate.top_degree
        if top < 0:
            return []
        return list(self.series.coeffs[: top + 1])

    def as_dict(self):
        return {
            "g": self.g,
            "strata": [{"lambda": s.lam, "index": s.index} for s in self.strata],
            "betti": self.betti,
            "certificate": self.certificate.as_dict(),
        }


def _certify(g, series, T):
    top = 6 * g - 6
    failures = []

    reference = closed_form(g, T)
    mismatch = next((i for i in range(T + 1) if series[i] != reference[i]), None)
    matches = mismatch is None
    if not matches:
        failures.append(("matches_closed_form", mismatch, "differs from closed form"))

    if top < 0:
        polynomial = False
        failures.append(("polynomial", None, f"expected top degree {top} is negative (genus {g})"))
    else:
        if T <= top:
            raise ValueError(f"truncation {T} cannot certify top degree {top}")
        bad = next((i for i in range(top + 1, T + 1) if series[i] != 0), None)
        polynomial = bad is None
        if not polynomial:
            failures.append(("polynomial", bad, "nonzero coefficient above top degree"))

    neg = next((i for i in range(T + 1) if series[i] < 0), None)
    nonnegative = neg is None
    if not nonnegative:
        failures.append(("nonnegative", neg, f"coefficient {series[neg]}"))

    if top < 0:
        palindromic = False
        failures.append(("palindromic", None, "no top degree"))
    else:
        asym = next((i for i in range(top + 1) if series[i] != series[top - i]), None)
        palindromic = asym is None and series[top] != 0
        if not palindromic:
            failures.append(("palindromic", asym if asym is not None else top, "not symmetric"))

    failures.sort(key=lambda f: ["polynomial", "nonnegative", "palindromic",
                                 "matches_closed_form"].index(f[0]))
    return Certificate(polynomial, nonnegative, palindromic, matches, top, failures)


def poincare_reduced(g, lambda_max=None, T=None, *, strict=False):
    """Poincare polynomial of the reduced space by Morse-theoretic subtraction.

    Subtracts the strata contributions for ``lam = 1..lambda_max`` from the
    equivariant total and certifies the result.  With ``strict=True`` a
    failed certificate raises :class:`CertificateFailure`.
    """
    if T is None:
        T = default_truncation(g)
    if lambda_max is None:
        lambda_max = minimal_lambda_max(g, T)
    if T > 2 * (2 * lambda_max + g - 2) - 1:
        raise ValueError(
            f"truncation {T} too high for lambda_max={lambda_max}; omitted strata would leak in"
        )
    total = equivariant_total(g, T)
    strata = []
    for lam in critical_components(MU_HALF, lambda_max):
        contrib = stratum_contribution(g, lam, T)
        total = total - contrib
        strata.append(StratumDescriptor(lam, index_of_stratum(g, lam), component_series(g, T)))
    cert = _certify(g, total, T)
    if strict:
        cert.raise_if_failed()
    return ReducedPoincare(g, lambda_max, T, total, strata, cert)
