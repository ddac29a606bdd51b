"""Gradient flow of the norm-square of the moment map on products of spheres.

A point is a tuple of vectors ``m_i`` in ``su(2)* = R^3`` with ``|m_i| = r_i``
(a product of coadjoint orbits).  The diagonal SO(3) action has moment map
``Phi(m) = sum_i m_i`` and we flow by ``-grad f`` for ``f = |Phi|^2 / 2``.

Each sphere carries its Kahler metric: the symplectic form is the area form
divided by ``r_i`` and the complex structure is rotation by a right angle, so
the metric is the Euclidean one divided by ``r_i``.  With this convention the
Riemannian gradient on factor ``i`` is ``r_i`` times the tangential part of
``Phi``, and ``df/dt = -||grad f||^2`` with the norm taken in the same metric.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import Radau
from scipy.optimize import brentq

from .errors import InsufficientSamplesError, NoConvergenceError

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4
# safe fraction of the real-axis stability limit (about 3.3) of the 5th order method
_STAB = 3.0


@dataclass(frozen=True)
class OrbitProductConfig:
    radii: tuple
    tol: float = 1e-10
    eps_grad: float = 1e-8
    t_max: float = 1e4
    max_steps: int = 200_000
    method: str = "rk45"

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        if not self.radii:
            raise ValueError("need at least one sphere")
        if any(not (r > 0) for r in self.radii):
            raise ValueError("radii must be positive")
        if self.tol <= 0 or self.eps_grad <= 0 or self.t_max <= 0:
            raise ValueError("tolerances and t_max must be positive")
        if self.method not in ("rk45", "radau"):
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def r(self):
        return np.asarray(self.radii)


class OrbitProductState:
    """Immutable point on a product of spheres of the given radii."""

    __slots__ = ("points", "radii")

    def __init__(self, points, radii, *, renormalize=True):
        p = np.array(points, dtype=float).reshape(-1, 3)
        r = np.asarray(radii, dtype=float)
        if p.shape[0] != r.shape[0]:
            raise ValueError("one point per radius required")
        norms = np.linalg.norm(p, axis=1)
        if np.any(norms == 0):
            raise ValueError("points must be nonzero")
        if renormalize:
            p = p * (r / norms)[:, None]
        elif np.any(np.abs(norms - r) > 1e-9):
            raise ValueError("points are not on their spheres")
        p.setflags(write=False)
        self.points = p
        self.radii = r

    @classmethod
    def random(cls, radii, rng):
        rng = np.random.default_rng(rng)
        return cls(rng.normal(size=(len(radii), 3)), radii)

    def rotated(self, R):
        return OrbitProductState(self.points @ np.asarray(R).T, self.radii)

    def digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.points).tobytes()).hexdigest()[:16]


def _as_points(state):
    return state.points if isinstance(state, OrbitProductState) else np.asarray(state, float)


def moment_map(state):
    return _as_points(state).sum(axis=0)


def f_value(state):
    phi = moment_map(state)
    return 0.5 * float(phi @ phi)


def _grad(points, r):
    phi = points.sum(axis=0)
    dots = points @ phi
    return (r[:, None] ** 2 * phi[None, :] - dots[:, None] * points) / r[:, None]


def grad_f(state):
    """Riemannian gradient of ``f``, one tangent vector per sphere."""
    return _grad(state.points, state.radii)


def metric_inner(radii, u, v):
    """Kahler inner product of two tangent vectors (Euclidean / r per factor)."""
    u = np.asarray(u)
    v = np.asarray(v)
    return float(np.sum(np.sum(u * v, axis=1) / np.asarray(radii)))


def grad_norm(state):
    g = grad_f(state)
    return math.sqrt(metric_inner(state.radii, g, g))


def _project(points, r):
    return points * (r / np.linalg.norm(points, axis=1))[:, None]


@dataclass
class RateClass:
    kind: str  # "exponential" or "polynomial"
    k: float | None
    exponent: float | None
    r2_exponential: float
    r2_power: float
    n_samples: int

    def as_dict(self):
        return {
            "kind": self.kind,
            "k": self.k,
            "power_slope": self.exponent,
            "r2_exponential": self.r2_exponential,
            "r2_power": self.r2_power,
            "n_samples": self.n_samples,
        }


@dataclass
class LojasiewiczEstimate:
    gamma: float
    stderr: float
    n_samples: int


@dataclass
class TrajectoryRecord:
    radii: tuple
    t: np.ndarray
    f: np.ndarray
    grad_norm: np.ndarray
    states: np.ndarray
    dissipation: np.ndarray
    converged: bool
    rate_class: RateClass | None = None
    gamma_hat: LojasiewiczEstimate | None = None
    hashes: list = field(default_factory=list)

    @property
    def limit_state(self):
        return OrbitProductState(self.states[-1], self.radii)

    @property
    def f_limit(self):
        return float(self.f[-1])

    def energy_defect(self):
        """``|f(T) - f(0) + int_0^T ||grad f||^2 dt|``."""
        return abs(self.f[-1] - self.f[0] + self.dissipation[-1])

    def samples(self):
        for i in range(len(self.t)):
            yield {
                "t": float(self.t[i]),
                "f": float(self.f[i]),
                "grad_norm": float(self.grad_norm[i]),
                "state": self.states[i].tolist(),
            }

    def summary(self):
        return {
            "radii": list(self.radii),
            "converged": self.converged,
            "t_final": float(self.t[-1]),
            "n_samples": int(len(self.t)),
            "f_limit": self.f_limit,
            "grad_norm_limit": float(self.grad_norm[-1]),
            "limit": self.states[-1].tolist(),
            "energy_defect": float(self.energy_defect()),
            "rate_class": None if self.rate_class is None else self.rate_class.as_dict(),
            "gamma_hat": None
            if self.gamma_hat is None
            else {"gamma": self.gamma_hat.gamma, "stderr": self.gamma_hat.stderr},
        }


def integrate_flow(config, init, *, raise_on_timeout=True):
    """Integrate ``dm/dt = -grad f`` until ``||grad f|| < eps_grad``.

    ``method="rk45"`` takes adaptive Dormand-Prince steps and projects every
    point back to its sphere after each accepted step; steps that would raise
    ``f`` are rejected.  Near a degenerate critical set the flow is stiff and
    the explicit method is stability-limited, so ``method="radau"`` uses an
    implicit Radau IIA solver on a radially stabilized field instead.

    In both cases the dissipated energy ``int ||grad f||^2 dt`` is carried as
    an extra solution component so the energy identity can be audited.
    """
    r = config.r
    if not isinstance(init, OrbitProductState):
        init = OrbitProductState(init, r)
    if not np.allclose(init.radii, r):
        raise ValueError("initial state radii do not match config")
    stepper = _rk45_steps if config.method == "rk45" else _radau_steps
    ts, states, diss = [0.0], [init.points.copy()], [0.0]
    gs = [grad_norm(init)]
    converged = gs[0] < config.eps_grad
    if not converged:
        for t, pts, w in stepper(config, init.points):
            gn = grad_norm(OrbitProductState(pts, r, renormalize=False))
            ts.append(t)
            states.append(pts)
            diss.append(w)
            gs.append(gn)
            if gn < config.eps_grad:
                converged = True
                break

    states = np.array(states)
    rec = TrajectoryRecord(
        radii=tuple(r),
        t=np.array(ts),
        f=0.5 * np.sum(states.sum(axis=1) ** 2, axis=1),
        grad_norm=np.array(gs),
        states=states,
        dissipation=np.array(diss),
        converged=converged,
    )
    rec.hashes = [hashlib.sha256(s.tobytes()).hexdigest()[:16] for s in rec.states]
    if not converged and raise_on_timeout:
        raise NoConvergenceError(
            f"||grad f|| = {gs[-1]:.3e} >= {config.eps_grad:.1e} at t = {ts[-1]:.4g}", rec
        )
    return rec


def _augmented_rhs(r):
    n = len(r)

    def rhs(y):
        pts = y[:-1].reshape(n, 3)
        g = _grad(pts, r)
        return np.concatenate([-g.ravel(), [np.sum(np.sum(g * g, axis=1) / r)]])

    return rhs


def _rk45_steps(config, points):
    r = config.r
    n = len(r)
    tol = config.tol
    rhs = _augmented_rhs(r)
    y = np.concatenate([points.ravel(), [0.0]])
    t = 0.0
    f_old = f_value(points)
    k1 = rhs(y)
    h = min(0.1, 0.01 / max(math.sqrt(k1[-1]), 1e-12))
    steps = 0
    while t < config.t_max and steps < config.max_steps:
        h = min(h, config.t_max - t)
        K = [k1]
        for s in range(1, 7):
            ys = y + h * sum(a * K[j] for j, a in enumerate(_A[s]))
            if s == 5:
                y6 = ys
            K.append(rhs(ys))
        y5 = y + h * sum(b * K[j] for j, b in enumerate(_B5) if b)
        # stages 6 and 7 share the time t + h; their difference quotient
        # estimates the spectral radius of the linearized field
        dy = np.linalg.norm((y5 - y6)[:-1])
        rho = np.linalg.norm((K[6] - K[5])[:-1]) / dy if dy > 0 else 0.0
        err_vec = h * sum(e * K[j] for j, e in enumerate(_E))
        # per-sphere Euclidean error norms keep step selection rotation invariant
        e_pts = np.linalg.norm(err_vec[:-1].reshape(n, 3), axis=1) / (tol + tol * r)
        e_w = abs(err_vec[-1]) / (tol + tol * max(abs(y[-1]), abs(y5[-1])))
        err = float(np.sqrt((np.sum(e_pts**2) + e_w**2) / (n + 1)))
        steps += 1
        if err <= 1.0:
            new_pts = _project(y5[:-1].reshape(n, 3), r)
            f_new = f_value(new_pts)
            if f_new > f_old + 4 * np.finfo(float).eps * max(f_old, 1.0):
                h *= 0.5
                continue
            y = np.concatenate([new_pts.ravel(), [y5[-1]]])
            t += h
            f_old = f_new
            k1 = rhs(y)
            yield t, new_pts, float(y[-1])
        fac = 0.9 * (1.0 / max(err, 1e-10)) ** 0.2
        h *= min(5.0, max(0.2, fac))
        # below the absolute tolerance the error estimate no longer sees an
        # unstable stiff mode, so keep h inside the real stability interval
        if rho > 0:
            h = min(h, _STAB / rho)


def _radau_steps(config, points):
    r = config.r
    n = len(r)

    def field(t, y):
        pts = y[:-1].reshape(n, 3)
        norms = np.linalg.norm(pts, axis=1)
        g = _grad(pts * (r / norms)[:, None], r)
        # the radial term pulls drifted points back onto their spheres
        v = -g - ((norms - r) / norms)[:, None] * pts
        return np.concatenate([v.ravel(), [np.sum(np.sum(g * g, axis=1) / r)]])

    def jac(t, y):
        m = len(y)
        J = np.empty((m, m))
        for j in range(m):
            h = 1e-7 * max(1.0, abs(y[j]))
            e = np.zeros(m)
            e[j] = h
            J[:, j] = (field(t, y + e) - field(t, y - e)) / (2 * h)
        return J

    y0 = np.concatenate([points.ravel(), [0.0]])
    solver = Radau(field, 0.0, y0, config.t_max, rtol=config.tol, atol=config.tol * 1e-2, jac=jac)
    steps = 0
    while solver.status == "running" and steps < config.max_steps:
        solver.step()
        steps += 1
        if solver.status == "failed":
            break
        pts = _project(solver.y[:-1].reshape(n, 3), r)
        yield solver.t, pts, float(solver.y[-1])


def _linfit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(len(x) - 2, 1)
    sxx = float(((x - x.mean()) ** 2).sum())
    stderr = math.sqrt(ss_res / dof / sxx) if sxx > 0 else math.inf
    return coef[0], coef[1], r2, ss_res, stderr


def distances_to_limit(record):
    diff = record.states - record.states[-1][None]
    return np.sqrt((diff**2).sum(axis=(1, 2)))


def _limit_error(record):
    # remaining arc length beyond the last sample: ~||grad||/k when
    # exponential, ~2 t ||grad|| in the t^(-3/2) gradient regime
    return 2.0 * max(record.t[-1], 1.0) * record.grad_norm[-1]


def classify_rate(record, *, min_samples=20, ceiling=1e-2, r2_threshold=0.99):
    """Fit ``log d(m(t), m(inf))`` against ``t`` and against ``log t``.

    ``d`` is the ambient Euclidean distance to the last recorded state.  Only
    the tail with ``d`` below ``ceiling * max d`` and safely above the
    uncertainty of the limit is used.  The exponential model is accepted only
    when its R^2 reaches ``r2_threshold`` and it fits better than the power law.
    """
    d = distances_to_limit(record)
    if d.max() == 0.0:
        return RateClass("exponential", math.inf, None, 1.0, 1.0, len(d))
    floor = 10.0 * _limit_error(record)
    mask = (d <= ceiling * d.max()) & (d > floor) & (record.t > 0)
    if mask.sum() < min_samples:
        raise InsufficientSamplesError(f"only {int(mask.sum())} tail samples (need {min_samples})")
    t = record.t[mask]
    logd = np.log(d[mask])
    slope_e, _, r2_e, res_e, _ = _linfit(t, logd)
    slope_p, _, r2_p, res_p, _ = _linfit(np.log(t), logd)
    if r2_e >= r2_threshold and res_e <= res_p:
        rc = RateClass("exponential", -slope_e, slope_p, r2_e, r2_p, int(mask.sum()))
    else:
        rc = RateClass("polynomial", None, slope_p, r2_e, r2_p, int(mask.sum()))
    record.rate_class = rc
    return rc


def estimate_lojasiewicz(record, *, f_inf=None, floor=1e-12, ceiling=1e-3, min_samples=20):
    """Slope of ``log ||grad f||`` against ``log (f - f_inf)`` over the tail.

    ``f_inf`` defaults to the last recorded value.  Samples with
    ``f - f_inf`` outside ``(floor, ceiling]`` are dropped.
    """
    if f_inf is None:
        f_inf = record.f_limit
    gap = record.f - f_inf
    mask = (gap > floor) & (gap <= ceiling) & (record.grad_norm > 0)
    if mask.sum() < min_samples:
        raise InsufficientSamplesError(f"only {int(mask.sum())} tail samples (need {min_samples})")
    slope, _, _, _, se = _linfit(np.log(gap[mask]), np.log(record.grad_norm[mask]))
    est = LojasiewiczEstimate(float(slope), float(se), int(mask.sum()))
    record.gamma_hat = est
    return est


def tangent_basis(state):
    """Orthonormal (Euclidean) basis of the tangent space, shape (2n, n, 3)."""
    pts = state.points
    n = len(pts)
    basis = []
    for i, p in enumerate(pts):
        u = p / np.linalg.norm(p)
        a = np.eye(3)[np.argmin(np.abs(u))]
        e1 = np.cross(u, a)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(u, e1)
        for e in (e1, e2):
            v = np.zeros((n, 3))
            v[i] = e
            basis.append(v)
    return np.array(basis)


def fd_gradient(state, h=1e-5):
    """Riemannian gradient from central differences of ``f``.

    The derivative along each Euclidean-orthonormal tangent vector ``e`` on
    factor ``i`` is converted to the Kahler dual by the factor ``r_i``.
    """
    r = state.radii
    out = np.zeros_like(state.points)
    for v in tangent_basis(state):
        fp = f_value(_project(state.points + h * v, r))
        fm = f_value(_project(state.points - h * v, r))
        i = int(np.argmax(np.abs(v).sum(axis=1)))
        out += (fp - fm) / (2 * h) * r[i] * v
    return out


def hessian_spectrum(state, h=1e-5):
    """Eigenvalues of the linearized gradient field at ``state``.

    Central finite differences of ``grad f`` along an orthonormal tangent
    basis, with each displaced point projected back to its sphere.  At a
    critical point these are the decay rates of the linearized flow.
    """
    basis = tangent_basis(state)
    r = state.radii
    J = np.empty((len(basis), len(basis)))
    for b, v in enumerate(basis):
        gp = _grad(_project(state.points + h * v, r), r)
        gm = _grad(_project(state.points - h * v, r), r)
        dg = (gp - gm) / (2 * h)
        J[:, b] = [float(np.sum(dg * e)) for e in basis]
    return np.sort(np.linalg.eigvals(J).real)


def smallest_positive_rate(state, h=1e-5, zero_tol=1e-6):
    ev = hessian_spectrum(state, h)
    pos = ev[ev > zero_tol]
    return float(pos.min()) if len(pos) else math.nan


# --- Kempf-Ness function along complexified one-parameter orbits ----------


def _log_cosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2 * ax)) - math.log(2.0)


def _heights(state, xi):
    xi = np.asarray(xi, float)
    if abs(np.linalg.norm(xi) - 1) > 1e-12:
        raise ValueError("xi must be a unit vector")
    return state.points @ xi, state.radii


def complexified_orbit_point(state, xi, tau):
    """``exp(i tau xi) . m``, acting on each sphere by a Mobius dilation.

    In stereographic coordinates from the ``-xi`` pole the action is
    ``z -> e^tau z``: every point slides along its meridian towards ``+xi``
    (the action of ``i xi`` is the gradient flow of the height ``<m, xi>``).
    """
    xi = np.asarray(xi, float)
    out = []
    for p, r in zip(state.points, state.radii):
        h = float(p @ xi)
        perp = p - h * xi
        pn = np.linalg.norm(perp)
        if pn < 1e-15 * r:
            out.append(p)
            continue
        # stereographic radius from the -xi pole: |z| = sqrt((r + h)/(r - h))
        c = math.atanh(max(-1.0, min(1.0, h / r)))
        h_new = r * math.tanh(c + tau)
        out.append(h_new * xi + perp / pn * math.sqrt(max(r * r - h_new * h_new, 0.0)))
    return OrbitProductState(np.array(out), state.radii)


def kempf_ness(state, xi, tau_grid):
    """Values of the Kempf-Ness function ``psi`` along ``exp(i tau xi) m``.

    Normalized by ``psi(0) = 0``.  On a sphere of radius ``r`` whose height
    along ``xi`` is ``r tanh(c)``, ``psi = r (log cosh(tau + c) - log cosh c)``;
    points fixed by ``xi`` contribute ``+-r tau``.  The derivative is
    ``<Phi(exp(i tau xi) m), xi>`` and the second derivative is the squared
    length of the generating vector field, so ``psi`` is convex.
    """
    h, r = _heights(state, xi)
    tau = np.asarray(tau_grid, float)
    psi = np.zeros_like(tau)
    for hi, ri in zip(h, r):
        ratio = hi / ri
        if abs(ratio) >= 1 - 1e-15:
            psi += math.copysign(ri, ratio) * tau
        else:
            c = math.atanh(ratio)
            psi += ri * (_log_cosh(tau + c) - _log_cosh(c))
    return psi


def kempf_ness_slope(state, xi, tau):
    """``<Phi(exp(i tau xi) m), xi>`` evaluated on the moved point."""
    moved = complexified_orbit_point(state, xi, tau)
    return float(moment_map(moved) @ np.asarray(xi, float))


def kempf_ness_critical_point(state, xi, bracket=50.0):
    """Root of ``psi'`` along the ray, or ``None`` if ``psi`` is monotone."""
    lo, hi = kempf_ness_slope(state, xi, -bracket), kempf_ness_slope(state, xi, bracket)
    if lo > 0 or hi < 0 or lo == hi:
        return None
    return brentq(lambda s: kempf_ness_slope(state, xi, s), -bracket, bracket, xtol=1e-14)
