"""Rank-one root data, the Weyl alcove and affine Weyl group combinatorics.

The Cartan line of SU(2) is identified with the reals so that the alcove is
``[0, 1/2]``.  With this normalization the simple root acts by ``x -> 2x``,
the affine walls are the half-integers ``{x : 2x in Z}``, and the coweight
lattice (exponentials equal to the identity) is ``Z``.  The affine Weyl group
is generated by ``x -> -x`` and the integer translations.

Inputs given as ``int`` or ``fractions.Fraction`` are handled exactly; floats
use the tolerance ``WALL_TOL`` for wall membership.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

from .errors import WallPointError

WALL_TOL = 1e-12

# Conversion from the integer "lambda scale" used for critical components to
# the alcove scale.  Both are the same line: coweights are integers and the
# marking mu = 1/2 is the far end of the alcove.
LAMBDA_SCALE = Fraction(1)


@dataclass(frozen=True)
class RootDatum:
    """Root datum of a compact simply connected group (only SU(2) for now)."""

    rank: int = 1
    simple_root_norm: Fraction = Fraction(2)
    coweight_lattice_generator: Fraction = Fraction(1)

    def __post_init__(self):
        if self.rank != 1:
            raise NotImplementedError("only rank one root data are supported")

    @property
    def alcove(self):
        return (Fraction(0), 1 / self.simple_root_norm)

    def alpha(self, x):
        """Evaluate the simple (= highest) root on a Cartan element."""
        return self.simple_root_norm * x if _is_exact(x) else float(self.simple_root_norm) * x

    def inner(self, x, y):
        return x * y

    def holonomy(self, x):
        """The 2x2 unitary ``exp(2 pi i x diag(1, -1))``."""
        phase = np.exp(2j * np.pi * float(x))
        return np.diag([phase, np.conj(phase)])


SU2 = RootDatum()


def _is_exact(x):
    return isinstance(x, Rational)


def _exact(x):
    return Fraction(x) if _is_exact(x) else x


@dataclass(frozen=True)
class AlcovePoint:
    value: float | Fraction

    def __post_init__(self):
        lo, hi = SU2.alcove
        tol = 0 if _is_exact(self.value) else WALL_TOL
        if not (lo - tol <= self.value <= hi + tol):
            raise ValueError(f"{self.value} is outside the alcove [0, 1/2]")


@dataclass(frozen=True)
class AffineWeylElement:
    """The map ``x -> (-1)**reflection * x + translation``."""

    reflection: bool = False
    translation: int = 0

    def __call__(self, x):
        y = -x if self.reflection else x
        return y + self.translation

    def __mul__(self, other: AffineWeylElement) -> AffineWeylElement:
        # (self * other)(x) == self(other(x))
        shift = -other.translation if self.reflection else other.translation
        return AffineWeylElement(self.reflection != other.reflection, shift + self.translation)

    def inverse(self) -> AffineWeylElement:
        if self.reflection:
            return AffineWeylElement(True, self.translation)
        return AffineWeylElement(False, -self.translation)

    @classmethod
    def identity(cls) -> AffineWeylElement:
        return cls(False, 0)


def alcove_project(xi):
    """Return the alcove representative of ``xi`` and the group element taking
    ``xi`` to it."""
    xi = _exact(xi)
    if not _is_exact(xi) and not math.isfinite(xi):
        raise ValueError("xi must be finite")
    n = math.floor(xi)
    frac = xi - n
    if frac <= Fraction(1, 2):
        w = AffineWeylElement(False, -n)
    else:
        w = AffineWeylElement(True, n + 1)
    p = w(xi)
    if not _is_exact(p):
        # floor/subtract can land a hair outside the alcove in floating point
        p = min(max(p, 0.0), 0.5)
    return AlcovePoint(p), w


def wall_index(x):
    """Return ``n`` if ``x`` lies on the wall ``2x = n``, else ``None``."""
    x = _exact(x)
    y = SU2.alpha(x)
    if _is_exact(y):
        return int(y) if y.denominator == 1 else None
    n = round(y)
    return n if abs(y - n) <= 2 * WALL_TOL else None


def separating_hyperplane_count(lam, mu, *, strict=True):
    """Number of affine walls strictly separating ``lam`` from ``mu``.

    With ``strict=True`` an endpoint on a wall raises :class:`WallPointError`.
    With ``strict=False`` walls through an endpoint are not counted: the
    corresponding root vanishes there, so it does not separate the points.
    """
    lam, mu = _exact(lam), _exact(mu)
    on_wall = [wall_index(v) for v in (lam, mu)]
    if strict:
        for v, n in zip((lam, mu), on_wall):
            if n is not None:
                raise WallPointError(f"{v} lies on the affine wall 2x = {n}")
    ends = []
    for v, n in zip((lam, mu), on_wall):
        ends.append(Fraction(n, 2) if n is not None else v)
    lo, hi = sorted(ends)
    # walls n/2 with lo < n/2 < hi
    a, b = SU2.alpha(lo), SU2.alpha(hi)
    first = math.floor(a) + 1
    last = math.ceil(b) - 1
    return max(0, last - first + 1)


def centralizer_roots(xi):
    """Affine roots vanishing at ``xi``, as multiples of the simple root.

    Returns ``frozenset({1, -1})`` exactly when ``exp(xi)`` is central
    (``2 xi`` an integer, so the holonomy is ``+1`` or ``-1``) and the empty set
    otherwise.
    """
    return frozenset({1, -1}) if wall_index(xi) is not None else frozenset()


def is_coweight(x):
    """True if ``exp(x)`` is the identity, i.e. ``x`` is an integer."""
    x = _exact(x)
    if _is_exact(x):
        return x.denominator == 1
    return abs(x - round(x)) <= WALL_TOL


def lambda_to_alcove_scale(lam):
    return LAMBDA_SCALE * _exact(lam) if _is_exact(lam) else float(LAMBDA_SCALE) * lam
