"""Birkhoff factorization of matrix Laurent-polynomial loops.

A loop ``g(z) = sum_k A_k z^k`` that is invertible on the unit circle splits as

    g = g_minus * z^lam * g_plus

with ``g_minus`` a polynomial in ``1/z`` invertible on ``|z| >= 1`` (including
infinity), ``g_plus`` a polynomial in ``z`` invertible on ``|z| <= 1`` and
``lam`` the nonincreasing partial indices.

The algorithm works with the polynomial matrix ``P = z^d g``:

1. every zero ``b`` of ``det P`` outside the closed disk is split off on the
   right: a kernel vector of ``P(b)`` lets us write ``P = M diag(1 - z/b, 1,
   ...) V^H``, lowering the degree of ``det`` by one;
2. what remains has all determinantal zeros inside the disk; column reduction
   by unimodular operations makes its highest-column-degree coefficient matrix
   invertible, and then ``M = (M U z^-delta) z^delta U^-1`` is already of the
   required shape;
3. indices are sorted and ``g_minus(infinity)`` is brought to a normal form.

The normal form is the only freedom left.  The stabilizer of ``z^lam`` acts on
``g_minus(infinity)`` by right multiplication with block lower triangular
matrices (blocks grouped by equal indices), so the reachable normal form is a
block upper unipotent matrix.  It is the identity exactly when the indices are
all equal or when ``g_minus(infinity)`` happens to be block lower triangular.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg

from .errors import NumericalBreakdown, SingularOnCircle

CIRCLE_SAMPLES = 256
INVERTIBILITY_FLOOR = 1e-8
COND_LIMIT = 1e12
# normalizing through a pivot of condition k costs about k * eps in the residual
PIVOT_LIMIT = 1e6
RESIDUAL_TOL = 1e-8
REFINE_STEPS = 3


def _circle(m):
    return np.exp(2j * np.pi * np.arange(m) / m)


class LaurentLoop:
    """Matrix Laurent polynomial ``sum_{k=lo}^{hi} A_k z^k``."""

    __slots__ = ("n", "lo", "coeffs")

    def __init__(self, coeffs, n=None, *, check=False):
        items = {int(k): np.array(v, dtype=complex) for k, v in dict(coeffs).items()}
        if n is None:
            if not items:
                raise ValueError("cannot infer size of an empty loop")
            n = next(iter(items.values())).shape[0]
        for k, v in items.items():
            if v.shape != (n, n):
                raise ValueError(f"coefficient {k} has shape {v.shape}, expected {(n, n)}")
        if items:
            lo, hi = min(items), max(items)
        else:
            lo = hi = 0
        arr = np.zeros((hi - lo + 1, n, n), complex)
        for k, v in items.items():
            arr[k - lo] = v
        arr.setflags(write=False)
        self.n = n
        self.lo = lo
        self.coeffs = arr
        if check:
            self.check_invertible()

    @classmethod
    def from_array(cls, arr, lo):
        arr = np.asarray(arr, complex)
        return cls({lo + i: arr[i] for i in range(arr.shape[0])}, arr.shape[1])

    @classmethod
    def constant(cls, A):
        A = np.asarray(A, complex)
        return cls({0: A}, A.shape[0])

    @classmethod
    def identity(cls, n):
        return cls.constant(np.eye(n))

    @classmethod
    def diag_monomials(cls, exps):
        n = len(exps)
        c = {}
        for i, e in enumerate(exps):
            c.setdefault(int(e), np.zeros((n, n), complex))[i, i] = 1.0
        return cls(c, n)

    @classmethod
    def random(cls, n, d, rng, *, check=True, max_tries=100):
        """Loop with standard complex Gaussian coefficients on ``[-d, d]``."""
        rng = np.random.default_rng(rng)
        for _ in range(max_tries):
            arr = rng.normal(size=(2 * d + 1, n, n)) + 1j * rng.normal(size=(2 * d + 1, n, n))
            loop = cls.from_array(arr, -d)
            if not check or loop.min_singular_value() > INVERTIBILITY_FLOOR:
                return loop
        raise SingularOnCircle("could not draw a loop invertible on the circle")

    @property
    def hi(self):
        return self.lo + self.coeffs.shape[0] - 1

    def coeff(self, k):
        if self.lo <= k <= self.hi:
            return self.coeffs[k - self.lo]
        return np.zeros((self.n, self.n), complex)

    def __call__(self, z):
        z = np.atleast_1d(np.asarray(z, complex))
        ks = np.arange(self.lo, self.hi + 1)
        powers = z[:, None] ** ks[None, :]
        return np.einsum("zk,kij->zij", powers, self.coeffs)

    def __matmul__(self, other):
        if self.n != other.n:
            raise ValueError("size mismatch")
        a, b = self.coeffs, other.coeffs
        out = np.zeros((a.shape[0] + b.shape[0] - 1, self.n, self.n), complex)
        for i in range(a.shape[0]):
            for j in range(b.shape[0]):
                out[i + j] += a[i] @ b[j]
        return LaurentLoop.from_array(out, self.lo + other.lo)

    def __sub__(self, other):
        lo = min(self.lo, other.lo)
        hi = max(self.hi, other.hi)
        return LaurentLoop({k: self.coeff(k) - other.coeff(k) for k in range(lo, hi + 1)}, self.n)

    def trimmed(self, tol=0.0):
        """Drop leading and trailing coefficients with max entry ``<= tol``."""
        mags = np.abs(self.coeffs).reshape(self.coeffs.shape[0], -1).max(axis=1)
        keep = np.nonzero(mags > tol)[0]
        if keep.size == 0:
            return LaurentLoop({0: np.zeros((self.n, self.n))}, self.n)
        return LaurentLoop.from_array(self.coeffs[keep[0] : keep[-1] + 1], self.lo + keep[0])

    def support(self, tol=0.0):
        t = self.trimmed(tol)
        return t.lo, t.hi

    def singular_values_on_circle(self, m=CIRCLE_SAMPLES):
        return np.linalg.svd(self(_circle(m)), compute_uv=False)

    def min_singular_value(self, m=CIRCLE_SAMPLES):
        return float(self.singular_values_on_circle(m).min())

    def check_invertible(self, m=CIRCLE_SAMPLES):
        s = self.min_singular_value(m)
        if not s > INVERTIBILITY_FLOOR:
            raise SingularOnCircle(f"smallest singular value on the circle is {s:.3e}")

    def to_json(self):
        return {
            "n": self.n,
            "coeffs": {
                str(self.lo + i): [[[float(x.real), float(x.imag)] for x in row] for row in A]
                for i, A in enumerate(self.coeffs)
            },
        }

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        n = int(obj["n"])
        coeffs = {}
        for k, rows in obj["coeffs"].items():
            A = np.array(
                [[complex(*e) if isinstance(e, (list, tuple)) else complex(e) for e in r] for r in rows]
            )
            coeffs[int(k)] = A
        return cls(coeffs, n)


def winding_det(loop, samples=1024):
    """Winding number of ``det g`` around the unit circle."""
    loop.check_invertible()
    z = _circle(samples)
    dets = np.linalg.det(loop(z))
    if np.min(np.abs(dets)) == 0:
        raise SingularOnCircle("determinant vanishes at a sample point")
    phase = np.unwrap(np.angle(np.append(dets, dets[0])))
    w = (phase[-1] - phase[0]) / (2 * np.pi)
    r = round(w)
    if abs(w - r) > 0.25:
        raise SingularOnCircle(f"winding {w:.3f} is not close to an integer; increase samples")
    return int(r)


@dataclass
class Factorization:
    g_minus: LaurentLoop
    indices: tuple
    g_plus: LaurentLoop
    residual: float = math.nan

    def to_json(self):
        return {
            "n": self.g_minus.n,
            "indices": [int(i) for i in self.indices],
            "g_minus": self.g_minus.to_json(),
            "g_plus": self.g_plus.to_json(),
            "residual": float(self.residual),
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            LaurentLoop.from_json(obj["g_minus"]),
            tuple(int(i) for i in obj["indices"]),
            LaurentLoop.from_json(obj["g_plus"]),
            float(obj.get("residual", math.nan)),
        )

    def normalization_defect(self):
        return float(np.abs(self.g_minus.coeff(0) - np.eye(self.g_minus.n)).max())

    def support_defects(self):
        """Largest coefficient of ``g_minus`` in positive degrees and of
        ``g_plus`` in negative degrees."""
        gm, gp = self.g_minus, self.g_plus
        pos = [np.abs(gm.coeff(k)).max() for k in range(1, gm.hi + 1)]
        neg = [np.abs(gp.coeff(k)).max() for k in range(gp.lo, 0)]
        return float(max(pos, default=0.0)), float(max(neg, default=0.0))


def reconstruct(fact, samples=CIRCLE_SAMPLES, target=None):
    """Multiply the factors back together.

    Returns the product loop and, when ``target`` is given, the residual
    ``max_z ||target(z) - product(z)||_F`` over ``samples`` circle points.
    """
    prod = fact.g_minus @ LaurentLoop.diag_monomials(fact.indices) @ fact.g_plus
    if target is None:
        return prod, math.nan
    z = _circle(samples)
    res = float(np.linalg.norm(target(z) - prod(z), axis=(1, 2)).max())
    return prod, res


# Polynomial-matrix helpers.  A polynomial matrix is an array ``P[j]`` of
# coefficients of ``z^j``, shape ``(deg + 1, n, n)``.


def _peval(P, z):
    out = np.zeros(P.shape[1:], complex)
    for c in P[::-1]:
        out = out * z + c
    return out


def _pmul(P, Q):
    out = np.zeros((P.shape[0] + Q.shape[0] - 1,) + P.shape[1:], complex)
    for i in range(P.shape[0]):
        for j in range(Q.shape[0]):
            out[i + j] += P[i] @ Q[j]
    return out


def _det_zeros(P):
    """Finite zeros of ``det P`` via the block companion pencil."""
    deg = P.shape[0] - 1
    n = P.shape[1]
    if deg == 0:
        return np.zeros(0, complex)
    m = n * deg
    A = np.zeros((m, m), complex)
    B = np.eye(m, dtype=complex)
    A[: m - n, n:] = np.eye(m - n)
    for j in range(deg):
        A[m - n :, j * n : (j + 1) * n] = -P[j]
    B[m - n :, m - n :] = P[deg]
    ev = scipy.linalg.eigvals(A, B)
    return ev[np.isfinite(ev)]


def _column_degrees(P, tol):
    deg = np.full(P.shape[1], -1)
    for i in range(P.shape[1]):
        mags = np.abs(P[:, :, i]).max(axis=1)
        nz = np.nonzero(mags > tol)[0]
        if nz.size:
            deg[i] = nz[-1]
    return deg


def _split_outside_zero(P, b):
    """Write ``P = M diag(1 - z/b, 1, ...) V^H`` for a zero ``b`` with ``|b| > 1``."""
    n = P.shape[1]
    v = np.linalg.svd(_peval(P, b))[2][-1].conj()
    V, _ = np.linalg.qr(np.column_stack([v, np.eye(n)]), mode="complete")
    V = V[:, :n]
    PV = np.einsum("kij,jl->kil", P, V)
    col = PV[:, :, 0]
    # backward deflation of (1 - z/b), stable for |b| > 1
    q = np.zeros_like(col)
    q[0] = col[0]
    for j in range(1, col.shape[0]):
        q[j] = col[j] + q[j - 1] / b
    M = PV.copy()
    M[:, :, 0] = 0
    M[:-1, :, 0] = q[:-1]
    right = np.zeros((2, n, n), complex)
    right[0] = V.conj().T
    right[1, 0] = -V.conj().T[0] / b
    return M, right


def _column_reduce(P, tol, stage_base):
    """Column-reduce ``P`` by unimodular column operations.

    Returns ``(R, deg, Uinv)`` with ``R = P U`` column reduced, ``deg`` its
    column degrees and ``Uinv`` the polynomial inverse of ``U``.
    """
    n = P.shape[1]
    R = P.copy()
    Uinv = np.zeros((1, n, n), complex)
    Uinv[0] = np.eye(n)
    stage = stage_base
    while True:
        deg = _column_degrees(R, tol)
        if np.any(deg < 0):
            raise NumericalBreakdown("a column vanished identically", stage)
        C = np.stack([R[deg[i], :, i] for i in range(n)], axis=1)
        s = np.linalg.svd(C, compute_uv=False)
        if s[-1] > tol * s[0] * 1e3:
            return R[: deg.max() + 1], deg, Uinv
        w = np.linalg.svd(C)[2][-1].conj()
        big = np.abs(w) > 1e-8 * np.abs(w).max()
        # pivot: the highest-degree column in the support, then the largest
        # entry, then the lowest index
        cands = [i for i in range(n) if big[i]]
        j = max(cands, key=lambda i: (deg[i], np.abs(w[i]), -i))
        shift = np.zeros((deg[j] + 1, n, n), complex)
        for i in range(n):
            shift[0, i, i] = 1.0
        for i in cands:
            if i != j:
                shift[deg[j] - deg[i], i, j] = w[i] / w[j]
        inv = np.zeros_like(shift)
        inv[0] = np.eye(n)
        for i in cands:
            if i != j:
                inv[deg[j] - deg[i], i, j] = -w[i] / w[j]
        R = _pmul(R, shift)
        # the leading coefficient of column j now cancels
        R[deg[j] :, :, j] = 0
        R = R[: max(deg.max(), 0) + 1]
        Uinv = _pmul(inv, Uinv)
        stage += 1
        if stage - stage_base > 10 * n * max(1, P.shape[0]):
            raise NumericalBreakdown("column reduction did not terminate", stage)


def _block_ul(C, blocks):
    """``C = N B`` with ``N`` block upper unipotent and ``B`` block lower triangular."""
    n = C.shape[0]
    J = np.eye(n)[::-1]
    Cr = J @ C @ J
    rblocks = [(n - e, n - s) for s, e in reversed(blocks)]
    L = np.eye(n, dtype=complex)
    U = Cr.astype(complex).copy()
    scale = np.linalg.norm(C, 2)
    for bi, (s, e) in enumerate(rblocks):
        piv = U[s:e, s:e]
        # relative to C: a 1x1 block has condition number 1 even when tiny
        if np.linalg.svd(piv, compute_uv=False).min() * PIVOT_LIMIT <= scale:
            raise NumericalBreakdown("normalization pivot block is singular", "normalize")
        inv = np.linalg.inv(piv)
        for s2, e2 in rblocks[bi + 1 :]:
            f = U[s2:e2, s:e] @ inv
            L[s2:e2, s:e] = f
            U[s2:e2, :] -= f @ U[s:e, :]
    return J @ L @ J, J @ U @ J


def factorize(loop, *, tol=1e-10):
    """Birkhoff factorization ``loop = g_minus z^lam g_plus``."""
    loop.check_invertible()
    n = loop.n
    d = max(0, -loop.lo)
    P = np.array([loop.coeff(j - d) for j in range(0, loop.hi + d + 1)])
    scale = float(np.abs(P).max())
    ztol = tol * scale

    # 1. split off zeros outside the closed disk into the right factor
    right = np.zeros((1, n, n), complex)
    right[0] = np.eye(n)
    zeros = _det_zeros(P)
    outside = sorted(
        (b for b in zeros if 1 < abs(b) < 1e8), key=lambda b: (abs(b), b.real, b.imag)
    )
    stage = 0
    for b in outside:
        P, fac = _split_outside_zero(P, b)
        P = P[: _column_degrees(P, ztol).max() + 1]
        right = _pmul(fac, right)
        stage += 1

    # 2. column reduction
    R, deg, Uinv = _column_reduce(P, ztol, stage)
    right = _pmul(Uinv, right)

    # 3. indices and ordering
    lam = deg - d
    order = sorted(range(n), key=lambda i: (-lam[i], i))
    lam = lam[order]
    dmax = int(deg.max())
    gm = np.zeros((dmax + 1, n, n), complex)  # coefficient of z^{-j} at index j
    for col, i in enumerate(order):
        for j in range(deg[i] + 1):
            gm[j, :, col] = R[deg[i] - j, :, i]
    gp = right[:, order, :]

    # 4. normal form of g_minus(infinity)
    blocks = []
    s = 0
    while s < n:
        e = s
        while e < n and lam[e] == lam[s]:
            e += 1
        blocks.append((s, e))
        s = e
    C = gm[0]
    if np.linalg.cond(C) > COND_LIMIT:
        raise NumericalBreakdown("leading coefficient of g_minus is singular", "normalize")
    try:
        _, B = _block_ul(C, blocks)
    except NumericalBreakdown:
        # C lies outside the big Bruhat cell (e.g. an index swap); the
        # factorization is still valid, only without the normal form
        B = None
    if B is not None:
        gm = np.einsum("kij,jl->kil", gm, np.linalg.inv(B))
        # z^-lam B z^lam has entries B_ij z^(lam_j - lam_i), polynomial since
        # B is block lower triangular and lam is nonincreasing
        span = int(lam.max() - lam.min())
        conj = np.zeros((span + 1, n, n), complex)
        for i in range(n):
            for j in range(n):
                p = int(lam[j] - lam[i])
                if p >= 0:
                    conj[p, i, j] = B[i, j]
        gp = _pmul(conj, gp)

    g_minus = LaurentLoop.from_array(gm[::-1], -dmax).trimmed(ztol * 1e-3)
    g_plus = LaurentLoop.from_array(gp, 0).trimmed(ztol * 1e-3)
    fact = Factorization(g_minus, tuple(int(x) for x in lam), g_plus)
    _, fact.residual = reconstruct(fact, target=loop)
    for _ in range(REFINE_STEPS):
        if fact.residual <= tol * scale:
            break
        better = _refine(loop, fact)
        if not better.residual < fact.residual:
            break
        fact = better
    return fact


def _is_normal_form(C, lam, tol=1e-8):
    """Identity on the equal-index blocks and zero below them."""
    lower_or_diag = lam[:, None] <= lam[None, :]
    target = np.where(lam[:, None] == lam[None, :], np.eye(len(lam)), 0.0)
    return bool(np.all(np.abs(C - target)[lower_or_diag] <= tol))


def _refine(loop, fact):
    """One Gauss-Newton step on ``loop = g_minus z^lam g_plus``.

    Column reduction discards leading coefficients that are zero only to
    working precision; with the indices held fixed the remaining correction is a linear least-squares problem on circle
    samples.  Supports and the normal form of ``g_minus(infinity)`` are
    preserved.
    """
    n = loop.n
    gm, gp = fact.g_minus, fact.g_plus
    lam = LaurentLoop.diag_monomials(fact.indices)
    minus_degs = list(range(gm.lo, 1))
    plus_degs = list(range(0, gp.hi + 1))
    span = max(loop.hi, gm.hi + lam.hi + gp.hi) - min(loop.lo, gm.lo + lam.lo + gp.lo)
    z = _circle(max(CIRCLE_SAMPLES, 2 * span + 2))
    G_m, L, G_p = gm(z), lam(z), gp(z)
    left = L @ G_p  # multiplies a g_minus correction from the right
    right = G_m @ L  # multiplies a g_plus correction from the left
    eye = np.eye(n)
    blocks = []
    # vec(A X B) = (B^T kron A) vec(X) with column-major vec
    for k in minus_degs:
        blocks.append(np.concatenate([np.kron(left[i].T, eye) * z[i] ** k for i in range(len(z))]))
    for k in plus_degs:
        blocks.append(np.concatenate([np.kron(eye, right[i]) * z[i] ** k for i in range(len(z))]))
    A = np.concatenate(blocks, axis=1)
    # in normal form only the entries of g_minus(infinity) above the
    # equal-index blocks may move
    lam_v = np.asarray(fact.indices)
    free = np.ones(A.shape[1], bool)
    if _is_normal_form(gm.coeff(0), lam_v):
        upper = (lam_v[:, None] > lam_v[None, :]).reshape(-1, order="F")
        off = minus_degs.index(0) * n * n
        free[off : off + n * n] = upper
    r = loop(z) - G_m @ L @ G_p
    b = np.concatenate([r[i].reshape(-1, order="F") for i in range(len(z))])
    x = np.zeros(A.shape[1], complex)
    x[free] = np.linalg.lstsq(A[:, free], b, rcond=None)[0]
    x = x.reshape(-1, n * n)
    dm = {k: x[i].reshape(n, n, order="F") for i, k in enumerate(minus_degs)}
    dp = {k: x[len(minus_degs) + i].reshape(n, n, order="F") for i, k in enumerate(plus_degs)}
    new_m = LaurentLoop({k: gm.coeff(k) + dm.get(k, 0) for k in range(gm.lo, gm.hi + 1)}, n)
    new_p = LaurentLoop({k: gp.coeff(k) + dp.get(k, 0) for k in range(gp.lo, gp.hi + 1)}, n)
    out = Factorization(new_m, fact.indices, new_p)
    _, out.residual = reconstruct(out, target=loop)
    return out


# Independent index computation through Toeplitz kernels


def toeplitz_section(loop, shift, size):
    """Finite section of the block Toeplitz operator of ``z^-shift g``.

    Columns index the coefficients ``0..size-1`` of a vector polynomial ``x``;
    rows index all nonnegative coefficients of ``P_+(z^-shift g x)``.
    """
    n = loop.n
    lo, hi = loop.lo - shift, loop.hi - shift
    rows = max(size + hi, 1)
    T = np.zeros((rows * n, size * n), complex)
    for c in range(size):
        for k in range(lo, hi + 1):
            r = c + k
            if 0 <= r < rows:
                T[r * n : (r + 1) * n, c * n : (c + 1) * n] = loop.coeff(k + shift)
    return T


def toeplitz_kernel_dim(loop, shift, size=80, threshold=1e-6):
    T = toeplitz_section(loop, shift, size)
    s = np.linalg.svd(T, compute_uv=False)
    return int(T.shape[1] - np.sum(s >= threshold * s.max()))


def indices_by_toeplitz(loop, size=80, threshold=1e-6):
    """Partial indices from kernel dimensions ``sum_i max(0, j - lam_i)``."""
    w = winding_det(loop)
    n = loop.n
    lo = loop.lo - loop.hi - 1
    hi = loop.hi - loop.lo + 1
    dims = {j: toeplitz_kernel_dim(loop, j, size, threshold) for j in range(lo, hi + 1)}
    # number of indices < j is the second difference of dims
    count_below = {j: dims[j] - dims.get(j - 1, 0) for j in range(lo, hi + 1)}
    lam = []
    for j in range(lo + 1, hi + 1):
        lam.extend([j - 1] * (count_below[j] - count_below[j - 1]))
    lam = sorted(lam, reverse=True)
    if len(lam) != n or sum(lam) != w:
        raise NumericalBreakdown(f"inconsistent Toeplitz kernel dimensions {dims}", "toeplitz")
    return tuple(lam)


@dataclass(frozen=True)
class DoubleCosetLabel:
    indices: tuple
    trace: Fraction
    sl_part: tuple

    def reassemble(self):
        return tuple(self.trace + x for x in self.sl_part)


def double_coset_label(indices):
    """Sort the indices nonincreasingly and split off their mean."""
    lam = tuple(sorted((int(x) for x in indices), reverse=True))
    if not lam:
        raise ValueError("need at least one index")
    mean = Fraction(sum(lam), len(lam))
    sl = tuple(Fraction(x) - mean for x in lam)
    return DoubleCosetLabel(lam, mean, sl)
