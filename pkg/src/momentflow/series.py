"""Truncated power series with exact integer coefficients."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

from .errors import NonUnitLeadingTerm, TruncationMismatch


class TruncatedSeries:
    """A power series ``sum c_i t^i`` known modulo ``t^(order+1)``.

    Coefficients are Python ints, so arithmetic never rounds.
    """

    __slots__ = ("coeffs", "order")

    def __init__(self, coeffs, order):
        if order < 0:
            raise ValueError("truncation order must be nonnegative")
        coeffs = list(coeffs)
        for x in coeffs:
            if int(x) != x:
                raise TypeError(f"non-integer coefficient {x!r}")
        c = [int(x) for x in coeffs[: order + 1]]
        c.extend([0] * (order + 1 - len(c)))
        self.coeffs = tuple(c)
        self.order = order

    @classmethod
    def zero(cls, order):
        return cls((), order)

    @classmethod
    def one(cls, order):
        return cls((1,), order)

    @classmethod
    def monomial(cls, degree, order, coeff=1):
        if degree > order:
            return cls.zero(order)
        return cls([0] * degree + [coeff], order)

    @classmethod
    def binomial_power(cls, a, n, order, sign=1):
        """``(1 + sign * t^a)^n`` truncated."""
        c = [0] * (order + 1)
        for k in range(n + 1):
            if a * k > order:
                break
            c[a * k] = comb(n, k) * sign**k
        return cls(c, order)

    def _check(self, other):
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        if other.order != self.order:
            raise TruncationMismatch(f"orders {self.order} and {other.order} differ")
        return other

    def __add__(self, other):
        other = self._check(other)
        return TruncatedSeries([a + b for a, b in zip(self.coeffs, other.coeffs)], self.order)

    def __sub__(self, other):
        other = self._check(other)
        return TruncatedSeries([a - b for a, b in zip(self.coeffs, other.coeffs)], self.order)

    def __neg__(self):
        return TruncatedSeries([-a for a in self.coeffs], self.order)

    def __mul__(self, other):
        if isinstance(other, int):
            return TruncatedSeries([other * a for a in self.coeffs], self.order)
        other = self._check(other)
        T = self.order
        out = [0] * (T + 1)
        for i, a in enumerate(self.coeffs):
            if a:
                for j in range(T + 1 - i):
                    out[i + j] += a * other.coeffs[j]
        return TruncatedSeries(out, T)

    __rmul__ = __mul__

    def __pow__(self, n):
        result = TruncatedSeries.one(self.order)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __eq__(self, other):
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return self.order == other.order and self.coeffs == other.coeffs

    def __hash__(self):
        return hash((self.coeffs, self.order))

    def __getitem__(self, i):
        return self.coeffs[i] if 0 <= i <= self.order else 0

    def __repr__(self):
        return f"TruncatedSeries({list(self.coeffs)}, order={self.order})"

    def shift(self, k):
        """Multiply by ``t^k``."""
        return TruncatedSeries([0] * k + list(self.coeffs), self.order)

    def degree(self):
        """Largest index with a nonzero coefficient, or -1 for the zero series."""
        for i in range(self.order, -1, -1):
            if self.coeffs[i]:
                return i
        return -1

    def __str__(self):
        terms = []
        for i, c in enumerate(self.coeffs):
            if not c:
                continue
            mono = "1" if i == 0 else ("t" if i == 1 else f"t^{i}")
            if i == 0:
                terms.append(str(c))
            else:
                terms.append(mono if c == 1 else f"{c}*{mono}")
        return " + ".join(terms) if terms else "0"


def series_mul(a, b):
    return a * b


def series_add(a, b):
    return a + b


def series_inv_one_minus(a, order):
    """``1 / (1 - t^a)`` truncated at ``order``."""
    if a <= 0:
        raise ValueError("exponent must be positive")
    return TruncatedSeries([1 if i % a == 0 else 0 for i in range(order + 1)], order)


def series_inverse(den):
    lead = den.coeffs[0]
    if lead not in (1, -1):
        raise NonUnitLeadingTerm(f"constant term {lead} is not a unit in Z")
    T = den.order
    inv = [0] * (T + 1)
    inv[0] = lead
    for n in range(1, T + 1):
        s = sum(den.coeffs[k] * inv[n - k] for k in range(1, n + 1))
        inv[n] = -s * lead
    return TruncatedSeries(inv, T)


@dataclass(frozen=True)
class Division:
    quotient: TruncatedSeries
    remainder: TruncatedSeries
    certified: bool


def series_div_exact(num, den, max_degree=None):
    """Divide ``num`` by ``den`` (whose constant term must be +-1).

    Without ``max_degree`` the result is the series quotient modulo
    ``t^(order+1)`` and the remainder is zero by construction.  With
    ``max_degree`` the quotient is cut to a polynomial of that degree and the
    remainder ``num - q*den`` is computed; ``certified`` is true when the
    remainder vanishes and the truncation order is high enough for that to
    prove ``num = q*den`` as polynomials.
    """
    if num.order != den.order:
        raise TruncationMismatch(f"orders {num.order} and {den.order} differ")
    q = num * series_inverse(den)
    if max_degree is None:
        return Division(q, TruncatedSeries.zero(num.order), True)
    q = TruncatedSeries(q.coeffs[: max_degree + 1], num.order)
    rem = num - q * den
    enough = num.order >= max(num.degree(), max_degree + den.degree())
    return Division(q, rem, enough and rem.degree() < 0)
