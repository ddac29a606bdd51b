"""Cross-oracle checks run by ``momentflow verify``.

Each check compares a closed form or production routine against an
independent computation and returns a :class:`Check`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import birkhoff, boundary, finite_flow, series, strata


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.value = float(self.value)
        self.limit = float(self.limit)

    def as_dict(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "value": self.value,
            "limit": self.limit,
            "detail": self.detail,
        }


KAPPAS = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)
LENGTHS = (0.5, 1.0, 2.0)


def dtn_fd_error(kappa, L, grid_n=256):
    C = boundary.dtn_matrix(kappa, L)
    F = boundary.fd_block(kappa, L, grid_n)
    return float(np.linalg.norm(F - C) / np.linalg.norm(C))


def check_dtn_fd(grid_n=256, limit=1e-3):
    worst = max(dtn_fd_error(k, L, grid_n) for k in KAPPAS for L in LENGTHS)
    return Check("dtn_vs_fd", worst <= limit, worst, limit, f"grid {grid_n}")


def richardson_ratios(kappa=2.0, L=1.0, grids=(65, 129, 257, 513)):
    C = boundary.dtn_matrix(kappa, L)
    errs = [np.linalg.norm(boundary.fd_block(kappa, L, n) - C) for n in grids]
    return [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]


def check_richardson():
    ratios = richardson_ratios()
    worst = max(abs(r - 4.0) for r in ratios)
    return Check("dtn_fd_order2", worst <= 0.5, worst, 0.5, "ratios " + ", ".join(f"{r:.4f}" for r in ratios))


def check_p_operators(modes=32, twists=(0.0, 0.3, 1.0, 2.5, 3.0)):
    bad = []
    worst_sym = 0.0
    for a in twists:
        model = boundary.CylinderModel.from_twist(1.0, modes, a)
        op = boundary.p_operators(model)
        worst_sym = max(worst_sym, op.symmetry_defect())
        if op.eigenvalues().min() < -1e-10:
            bad.append(f"negative eigenvalue at twist {a}")
        if op.kernel_dim() != boundary.expected_kernel_dim(model):
            bad.append(f"kernel dimension at twist {a}")
    if worst_sym > 1e-12:
        bad.append("asymmetric")
    return Check("p_operators", not bad, worst_sym, 1e-12, "; ".join(bad))


def check_series_division(genera=(1, 2, 3, 4)):
    bad = []
    for g in genera:
        T = strata.default_truncation(g)
        num = series.TruncatedSeries.binomial_power(3, 2 * g, T) - series.TruncatedSeries.binomial_power(
            1, 2 * g, T
        ).shift(2 * g)
        den = series.TruncatedSeries.binomial_power(
            2, 1, T, sign=-1
        ) * series.TruncatedSeries.binomial_power(4, 1, T, sign=-1)
        div = series.series_div_exact(num, den, max_degree=6 * g - 6)
        if not div.certified or div.quotient * den != num:
            bad.append(g)
    return Check("series_division", not bad, float(len(bad)), 0.0, f"failed genera {bad}")


def check_strata_g2():
    res = strata.poincare_reduced(2)
    ok = res.certificate.ok and res.betti == [1, 0, 1, 4, 1, 0, 1]
    return Check("strata_g2", ok, 0.0 if ok else 1.0, 0.0, str(res.betti))


def gradient_fd_error(n_states=100, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_states):
        n = int(rng.integers(2, 5))
        r = rng.uniform(0.5, 3.0, n)
        st = finite_flow.OrbitProductState.random(r, rng)
        g = finite_flow.grad_f(st)
        fd = finite_flow.fd_gradient(st)
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(g)))
    return worst


def check_gradient_fd():
    worst = gradient_fd_error()
    return Check("gradient_vs_fd", worst <= 1e-6, worst, 1e-6, "100 random states")


def check_birkhoff(n_loops=10, seed=0):
    worst = 0.0
    bad = []
    for i in range(n_loops):
        rng = np.random.default_rng([seed, i])
        loop = birkhoff.LaurentLoop.random(2, int(rng.integers(1, 4)), rng)
        fact = birkhoff.factorize(loop)
        worst = max(worst, fact.residual)
        if sum(fact.indices) != birkhoff.winding_det(loop):
            bad.append(i)
    ok = worst <= birkhoff.RESIDUAL_TOL and not bad
    return Check("birkhoff_reconstruct", ok, worst, birkhoff.RESIDUAL_TOL, f"index-sum failures {bad}")


def kempf_ness_errors(n_rays=20, seed=0, h=1e-3, span=3.0):
    """Worst convexity violation and slope mismatch along random rays.

    The slope mismatch is relative to ``max(|Phi^xi|, 1e-3 sum r)`` so that
    rays where ``psi'`` crosses zero stay well defined.
    """
    rng = np.random.default_rng(seed)
    taus = np.arange(-span, span + h / 2, h)
    mid = 0.5 * (taus[1:] + taus[:-1])
    worst_convex = 0.0
    worst_slope = 0.0
    for _ in range(n_rays):
        r = rng.uniform(0.5, 2.0, int(rng.integers(2, 5)))
        st = finite_flow.OrbitProductState.random(r, rng)
        xi = rng.normal(size=3)
        xi /= np.linalg.norm(xi)
        psi = np.asarray(finite_flow.kempf_ness(st, xi, taus))
        second = np.diff(psi, 2)
        worst_convex = max(worst_convex, float(-second.min()))
        slopes = np.array([finite_flow.kempf_ness_slope(st, xi, t) for t in mid])
        rel = np.abs(np.diff(psi) / h - slopes) / np.maximum(np.abs(slopes), 1e-3 * r.sum())
        worst_slope = max(worst_slope, float(rel.max()))
    return worst_convex, worst_slope


def check_kempf_ness(n_rays=5):
    convex, slope = kempf_ness_errors(n_rays)
    ok = convex <= 1e-8 and slope <= 1e-4
    return Check("kempf_ness", ok, slope, 1e-4, f"min second difference {-convex:.3e}")


ALL_CHECKS = (
    check_dtn_fd,
    check_richardson,
    check_p_operators,
    check_series_division,
    check_strata_g2,
    check_gradient_fd,
    check_birkhoff,
    check_kempf_ness,
)


def run_all():
    out = []
    for fn in ALL_CHECKS:
        try:
            out.append(fn())
        except Exception as exc:  # a crashing oracle is a failed check
            out.append(Check(fn.__name__.removeprefix("check_"), False, math.nan, math.nan, repr(exc)))
    return out
