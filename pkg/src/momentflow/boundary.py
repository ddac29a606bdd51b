"""Linear boundary heat flow on a flat cylinder, mode by mode.

The cylinder is ``X = S^1 x [0, L]`` with a constant flat background
connection ``xi d theta`` (``xi`` in the Cartan line).  Fields are
``su(2)``-valued and split into the Cartan component ``h`` and the root
components ``e+`` and ``e-``.  On Fourier mode ``k`` the covariant Laplacian
reduces to ``u'' = kappa^2 u`` with

    kappa = |k|       for h
    kappa = |k + a|   for e+
    kappa = |k - a|   for e-

where ``a = alpha(xi)`` is the twist.  Everything below is therefore exact
per mode: Dirichlet-to-Neumann blocks, the boundary operators ``P_+`` and
``P_-``, and the flow they generate.

Boundary conventions: the ``B-`` end of a block is ``t = 0`` and the ``B+``
end is ``t = L``.  Neumann data are outward normal derivatives, so a block
maps ``(u(0), u(L))`` to ``(-u'(0), u'(L))``.  With outward normals at both
ends the two boundary operators come out equal on this symmetric cylinder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import solve_banded

from . import liecore

COMPONENTS = ("h", "e+", "e-")
ROLES = ("B-", "B+")
KERNEL_TOL = 1e-12


@dataclass(frozen=True)
class CylinderModel:
    length: float
    modes: int
    xi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "length", float(self.length))
        object.__setattr__(self, "xi", float(self.xi))
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValueError("cylinder length must be positive")
        if int(self.modes) != self.modes or self.modes < 1:
            raise ValueError("mode cutoff must be a positive integer")
        object.__setattr__(self, "modes", int(self.modes))
        if not math.isfinite(self.twist):
            raise ValueError("twist must be finite")

    @classmethod
    def from_twist(cls, length, modes, twist):
        return cls(length, modes, twist / float(liecore.SU2.simple_root_norm))

    @property
    def twist(self):
        return float(liecore.SU2.alpha(self.xi))

    @property
    def ks(self):
        return np.arange(-self.modes, self.modes + 1)

    @property
    def dim(self):
        return 3 * (2 * self.modes + 1)

    def kappa(self, k, c):
        a = self.twist
        shift = {"h": 0.0, "e+": a, "e-": -a}[c]
        return abs(k + shift)

    def kappas(self):
        """Frequencies as an array of shape ``(2N+1, 3)``."""
        a = self.twist
        k = self.ks.astype(float)[:, None]
        return np.abs(k + np.array([0.0, a, -a])[None, :])

    def slot(self, k, c):
        return (k + self.modes) * 3 + COMPONENTS.index(c)


class BoundaryField:
    """Fourier coefficients ``b[k, c]`` of a real ``su(2)``-valued loop."""

    __slots__ = ("model", "coeffs", "role")

    def __init__(self, model, coeffs, role="B-", *, check=True):
        if role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        b = np.array(coeffs, dtype=complex).reshape(2 * model.modes + 1, 3)
        if check:
            defect = reality_defect(b)
            if defect > 1e-12 * max(1.0, float(np.abs(b).max(initial=0.0))):
                raise ValueError(f"coefficients violate the reality condition ({defect:.2e})")
        b.setflags(write=False)
        self.model = model
        self.coeffs = b
        self.role = role

    @classmethod
    def zero(cls, model, role="B-"):
        return cls(model, np.zeros((2 * model.modes + 1, 3)), role)

    @classmethod
    def from_real(cls, model, x, role="B-"):
        return cls(model, (real_basis(model) @ np.asarray(x, float)).reshape(-1, 3), role)

    @classmethod
    def random(cls, model, rng, role="B-", support=None):
        """Random real field; ``support`` limits it to modes ``|k| <= support``.

        With ``support`` the draw does not depend on the cutoff, so models
        with different ``N >= support`` receive the same loop.
        """
        rng = np.random.default_rng(rng)
        if support is None or support >= model.modes:
            return cls.from_real(model, rng.normal(size=model.dim), role)
        small = CylinderModel(model.length, support, model.xi)
        return cls.from_real(small, rng.normal(size=small.dim), role).padded(model)

    @classmethod
    def from_nonzero(cls, model, rows, role="B-"):
        """Inverse of :meth:`nonzero`; modes beyond the cutoff are an error."""
        b = np.zeros((2 * model.modes + 1, 3), complex)
        for k, c, re, im in rows:
            if int(k) != k or abs(int(k)) > model.modes:
                raise ValueError(f"mode {k} outside the cutoff {model.modes}")
            if c not in COMPONENTS:
                raise ValueError(f"unknown component {c!r}")
            b[int(k) + model.modes, COMPONENTS.index(c)] = complex(re, im)
        return cls(model, b, role)

    def real_coords(self):
        return (real_basis(self.model).conj().T @ self.coeffs.ravel()).real

    def energy(self):
        return 0.5 * float(np.sum(np.abs(self.coeffs) ** 2))

    def get(self, k, c):
        if abs(k) > self.model.modes:
            return 0j
        return complex(self.coeffs[k + self.model.modes, COMPONENTS.index(c)])

    def nonzero(self, tol=0.0):
        """``[[k, c, re, im], ...]`` for coefficients above ``tol``."""
        out = []
        for i, k in enumerate(self.model.ks):
            for j, c in enumerate(COMPONENTS):
                z = self.coeffs[i, j]
                if abs(z) > tol:
                    out.append([int(k), c, float(z.real), float(z.imag)])
        return out

    def padded(self, model):
        """The same loop viewed in a model with a larger mode cutoff."""
        if model.modes < self.model.modes or model.twist != self.model.twist:
            raise ValueError("can only pad to a larger cutoff with the same twist")
        b = np.zeros((2 * model.modes + 1, 3), complex)
        off = model.modes - self.model.modes
        b[off : off + 2 * self.model.modes + 1] = self.coeffs
        return BoundaryField(model, b, self.role)


def reality_defect(b):
    """Largest violation of ``conj(b[k,h]) = b[-k,h]``, ``conj(b[k,e+]) = b[-k,e-]``."""
    b = np.asarray(b)
    flip = b[::-1]
    dh = np.abs(np.conj(b[:, 0]) - flip[:, 0])
    de = np.abs(np.conj(b[:, 1]) - flip[:, 2])
    return float(max(dh.max(initial=0.0), de.max(initial=0.0)))


def _real_basis_columns(model):
    N = model.modes
    s = 1 / math.sqrt(2)
    cols = []
    cols.append([(0, "h", 1.0)])
    for k in range(1, N + 1):
        cols.append([(k, "h", s), (-k, "h", s)])
        cols.append([(k, "h", 1j * s), (-k, "h", -1j * s)])
    for k in range(-N, N + 1):
        cols.append([(k, "e+", s), (-k, "e-", s)])
        cols.append([(k, "e+", 1j * s), (-k, "e-", -1j * s)])
    return cols


def real_basis(model):
    """Unitary ``U`` whose columns are an orthonormal basis of real loops.

    A coefficient vector ``b`` (flattened ``(k, c)`` order) satisfies the
    reality condition exactly when ``U^H b`` is real.
    """
    cols = _real_basis_columns(model)
    U = np.zeros((model.dim, len(cols)), complex)
    for j, entries in enumerate(cols):
        for k, c, v in entries:
            U[model.slot(k, c), j] = v
    return U


# Dirichlet-to-Neumann blocks


@dataclass(frozen=True)
class DtNBlock:
    k: int
    c: str
    kappa: float
    D: np.ndarray

    def as_dict(self):
        return {"k": int(self.k), "c": self.c, "kappa": float(self.kappa), "D": self.D.tolist()}


def dtn_matrix(kappa, L):
    """Closed-form 2x2 Dirichlet-to-Neumann matrix of ``u'' = kappa^2 u`` on ``[0, L]``."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if kappa == 0:
        return np.array([[1 / L, -1 / L], [-1 / L, 1 / L]])
    x = kappa * L
    c = kappa / math.tanh(x)
    s = kappa / math.sinh(x) if x < 700 else 0.0
    return np.array([[c, -s], [-s, c]])


def dtn_assemble(model):
    blocks = []
    for k in model.ks:
        for c in COMPONENTS:
            kap = model.kappa(int(k), c)
            blocks.append(DtNBlock(int(k), c, kap, dtn_matrix(kap, model.length)))
    return blocks


@dataclass(frozen=True)
class ModeExtension:
    """Harmonic extension ``u(t) = A e^{kappa t} + B e^{-kappa t}`` (or ``A + B t``)."""

    kappa: float
    length: float
    A: float
    B: float

    def __call__(self, t):
        t = np.asarray(t, float)
        if self.kappa == 0:
            return self.A + self.B * t
        return self.A * np.exp(self.kappa * t) + self.B * np.exp(-self.kappa * t)

    def derivative(self, t):
        t = np.asarray(t, float)
        if self.kappa == 0:
            return self.B + 0 * t
        k = self.kappa
        return k * (self.A * np.exp(k * t) - self.B * np.exp(-k * t))

    def neumann(self):
        """Outward normal derivatives ``(-u'(0), u'(L))``."""
        return np.array([-float(self.derivative(0.0)), float(self.derivative(self.length))])


def extend_mode(kappa, L, u0, uL):
    """Harmonic extension of Dirichlet data ``u(0) = u0``, ``u(L) = uL``."""
    if kappa == 0:
        return ModeExtension(0.0, L, u0, (uL - u0) / L)
    # closed-form solve of A + B = u0, A e^{kL} + B e^{-kL} = uL
    x = kappa * L
    two_sinh = 2 * math.sinh(x)
    A = (uL - u0 * math.exp(-x)) / two_sinh
    B = (u0 * math.exp(x) - uL) / two_sinh
    return ModeExtension(kappa, L, A, B)


def harmonic_extension(model, u_plus, u_minus):
    """Extend Dirichlet data mode by mode.

    ``u_plus`` and ``u_minus`` are arrays of shape ``(2N+1, 3)`` (real or
    complex) holding the boundary values at ``t = L`` and ``t = 0``.
    Returns a dict ``{(k, c): ModeExtension}``; complex data are extended with
    complex coefficients since the equation is linear.
    """
    up = np.asarray(u_plus).reshape(2 * model.modes + 1, 3)
    um = np.asarray(u_minus).reshape(2 * model.modes + 1, 3)
    out = {}
    for i, k in enumerate(model.ks):
        for j, c in enumerate(COMPONENTS):
            out[(int(k), c)] = extend_mode(model.kappa(int(k), c), model.length, um[i, j], up[i, j])
    return out


# Finite-difference oracle


def fd_solve(kappa, L, u0, uL, grid_n):
    """Second-order finite differences for ``u'' = kappa^2 u`` on ``grid_n`` points."""
    if grid_n < 3:
        raise ValueError("need at least three grid points")
    h = L / (grid_n - 1)
    m = grid_n - 2
    ab = np.zeros((3, m))
    ab[0, 1:] = 1.0
    ab[1, :] = -2.0 - (kappa * h) ** 2
    ab[2, :-1] = 1.0
    rhs = np.zeros(m)
    rhs[0] -= u0
    rhs[-1] -= uL
    interior = solve_banded((1, 1), ab, rhs) if m else np.zeros(0)
    return np.linspace(0.0, L, grid_n), np.concatenate([[u0], interior, [uL]])


def fd_neumann(u, kappa, h):
    """Outward derivatives at both ends from a second-order one-sided formula.

    The formula uses the equation itself: ``u'(0) = (u1 - u0)/h - h u''(0)/2``
    with ``u''(0) = kappa^2 u0``, and symmetrically at ``t = L``.
    """
    k2 = kappa * kappa
    d0 = (u[1] - u[0]) / h - h * k2 * u[0] / 2
    dL = (u[-1] - u[-2]) / h + h * k2 * u[-1] / 2
    return np.array([-d0, dL])


def fd_block(kappa, L, grid_n):
    D = np.zeros((2, 2))
    h = L / (grid_n - 1)
    for col, (u0, uL) in enumerate([(1.0, 0.0), (0.0, 1.0)]):
        _, u = fd_solve(kappa, L, u0, uL, grid_n)
        D[:, col] = fd_neumann(u, kappa, h)
    return D


def fd_oracle(model, grid_n=256):
    if grid_n < 64:
        raise ValueError("grid_n must be at least 64")
    return [
        DtNBlock(b.k, b.c, b.kappa, fd_block(b.kappa, model.length, grid_n))
        for b in dtn_assemble(model)
    ]


# Boundary operators


def p_symbol(kappa, L):
    """Scalar action ``kappa tanh(kappa L / 2)`` of ``P_+`` (and of ``P_-``) on one mode."""
    return float(kappa * math.tanh(kappa * L / 2))


@dataclass(frozen=True)
class ModeOperator:
    """``P_+`` and ``P_-`` over the truncated basis.

    ``p_plus`` and ``p_minus`` hold the diagonal actions in the complex
    ``(k, c)`` basis.  The ``*_real`` matrices are the same operators written
    in the orthonormal basis of real loops from :func:`real_basis`.
    """

    model: CylinderModel
    p_plus: np.ndarray
    p_minus: np.ndarray

    def _real(self, diag):
        U = real_basis(self.model)
        M = U.conj().T @ (diag.ravel()[:, None] * U)
        return M.real

    @property
    def sum_diag(self):
        return self.p_plus + self.p_minus

    @property
    def diff_diag(self):
        return self.p_minus - self.p_plus

    @property
    def plus_real(self):
        return self._real(self.p_plus)

    @property
    def minus_real(self):
        return self._real(self.p_minus)

    @property
    def sum_real(self):
        return self._real(self.sum_diag)

    @property
    def diff_real(self):
        return self._real(self.diff_diag)

    def symmetry_defect(self):
        M = self.sum_real
        return float(np.abs(M - M.T).max())

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.sum_real)

    def kernel_dim(self, tol=1e-10):
        return int(np.sum(np.abs(self.eigenvalues()) <= tol))

    def smallest_nonzero(self, tol=1e-10):
        ev = self.eigenvalues()
        ev = ev[ev > tol]
        return float(ev.min()) if ev.size else math.inf


def p_operators(model):
    """Assemble ``P_+`` and ``P_-`` from the DtN blocks.

    Data on the two ends are the same loop (diagonal embedding), so the
    Neumann output at each end is the corresponding row sum of the block.
    ``P_-`` reads the ``t = 0`` end and ``P_+`` the ``t = L`` end.  The row sums
    equal ``kappa coth(kappa L) - kappa / sinh(kappa L)``; we evaluate the
    equivalent ``kappa tanh(kappa L / 2)``, which does not cancel for small
    ``kappa``.
    """
    kap = model.kappas()
    L = model.length
    p = np.vectorize(lambda x: p_symbol(x, L))(kap).astype(float)
    return ModeOperator(model, p.copy(), p.copy())


def expected_kernel_dim(model):
    a = model.twist
    twisted = liecore.is_coweight(a) and abs(a) <= model.modes
    return 1 + (2 if twisted else 0)


# Flow


@dataclass
class BoundaryTrajectory:
    model: CylinderModel
    t: np.ndarray
    B_minus: np.ndarray  # (samples, 2N+1, 3)
    B_plus: np.ndarray
    dissipation_rate: np.ndarray

    @property
    def energy(self):
        # exactly rounded sums, so padding with zero modes changes nothing
        sq = (np.abs(self.B_minus) ** 2).reshape(len(self.t), -1)
        return 0.5 * np.array([math.fsum(row) for row in sq])

    def field(self, i, role="B-"):
        arr = self.B_minus if role == "B-" else self.B_plus
        return BoundaryField(self.model, arr[i], role, check=False)

    def energy_balance_defect(self):
        """``|E(T) - E(0) + int <(P_+ + P_-)B, B> dt|`` with Simpson's rule."""
        e = self.energy
        return abs(e[-1] - e[0] + simpson(self.dissipation_rate, x=self.t))

    def samples(self):
        e = self.energy
        for i in range(len(self.t)):
            yield {
                "t": float(self.t[i]),
                "energy": float(e[i]),
                "B_minus": self.field(i).nonzero(),
            }


def flow_linear(model, B_minus, B_plus=None, T=1.0, n_samples=101, operator=None):
    """Exact solution of the linear boundary flow.

    ``dB-/dt = -(P_+ + P_-) B-`` and ``dB+/dt = (P_- - P_+) B-``; every mode is
    a scalar exponential.
    """
    if not isinstance(B_minus, BoundaryField):
        B_minus = BoundaryField(model, B_minus, "B-")
    if B_plus is None:
        B_plus = BoundaryField.zero(model, "B+")
    elif not isinstance(B_plus, BoundaryField):
        B_plus = BoundaryField(model, B_plus, "B+")
    op = operator if operator is not None else p_operators(model)
    lam = op.sum_diag
    mu = op.diff_diag
    t = np.linspace(0.0, float(T), int(n_samples))
    decay = np.exp(-lam[None] * t[:, None, None])
    bm = decay * B_minus.coeffs[None]
    # int_0^t e^{-lam s} ds, with the lam = 0 limit t
    with np.errstate(divide="ignore", invalid="ignore"):
        integ = np.where(lam[None] > 0, (1 - decay) / lam[None], t[:, None, None])
    bp = B_plus.coeffs[None] + mu[None] * integ * B_minus.coeffs[None]
    rate = np.array([math.fsum(row) for row in (lam[None] * np.abs(bm) ** 2).reshape(len(t), -1)])
    return BoundaryTrajectory(model, t, bm, bp, rate)


def critical_limit(model, B_minus):
    """The ``t -> infinity`` limit of the flow: projection onto ``kappa = 0`` modes."""
    if not isinstance(B_minus, BoundaryField):
        B_minus = BoundaryField(model, B_minus, "B-")
    keep = model.kappas() <= KERNEL_TOL
    return BoundaryField(model, np.where(keep, B_minus.coeffs, 0), "B-")


def lojasiewicz_ratio(op, field):
    """``||grad||^2 / (f - f_inf)`` for the quadratic energy.

    The gradient is taken in the metric for which the dissipation rate is
    ``||grad||^2``; the ratio is then bounded below by twice the smallest
    nonzero eigenvalue.
    """
    b = field.coeffs
    lam = op.sum_diag
    moving = lam > KERNEL_TOL
    excess = 0.5 * float(np.sum(np.abs(b[moving]) ** 2))
    if excess == 0:
        return math.inf
    return float(np.sum(lam * np.abs(b) ** 2)) / excess


def operator_dump(model):
    return [b.as_dict() for b in dtn_assemble(model)]
