from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momentflow import liecore
from momentflow.errors import WallPointError
from momentflow.liecore import AffineWeylElement, alcove_project, separating_hyperplane_count


def test_alcove_endpoints_are_exact():
    assert liecore.SU2.alcove == (Fraction(0), Fraction(1, 2))


def test_inner_product_positive():
    for x in (Fraction(1, 3), -2.5, 1e-6):
        assert liecore.SU2.inner(x, x) > 0


def test_project_inside_alcove_is_identity():
    p, w = alcove_project(0.3)
    assert p.value == 0.3
    assert w == AffineWeylElement.identity()


def test_project_reflects_about_half():
    p, w = alcove_project(Fraction(7, 10))
    assert p.value == Fraction(3, 10)
    assert w.reflection
    assert w(Fraction(7, 10)) == Fraction(3, 10)


def test_project_negative_matches_brute_force():
    x = -2.2
    candidates = []
    for r in (False, True):
        for n in range(-4, 5):
            y = AffineWeylElement(r, n)(x)
            if -1e-12 <= y <= 0.5 + 1e-12:
                candidates.append(y)
    p, w = alcove_project(x)
    assert p.value == pytest.approx(0.2, abs=1e-12)
    assert abs(w(x) - p.value) <= 1e-12
    assert all(abs(c - p.value) <= 1e-12 for c in candidates)


def test_group_law_and_inverse():
    a = AffineWeylElement(True, 3)
    b = AffineWeylElement(False, -2)
    c = AffineWeylElement(True, 1)
    x = Fraction(2, 7)
    assert (a * b)(x) == a(b(x))
    assert ((a * b) * c)(x) == (a * (b * c))(x)
    for w in (a, b, c):
        assert (w * w.inverse())(x) == x


def test_separating_count_examples():
    assert separating_hyperplane_count(0.3, 0.2) == 0
    assert separating_hyperplane_count(Fraction(1, 3), Fraction(9, 4)) == 4
    with pytest.raises(WallPointError):
        separating_hyperplane_count(1, Fraction(1, 4))


def test_nonstrict_count_reproduces_index_shift():
    for lam in range(1, 101):
        assert separating_hyperplane_count(lam, Fraction(1, 2), strict=False) == 2 * lam - 2


def test_wall_tolerance_in_float_mode():
    with pytest.raises(WallPointError):
        separating_hyperplane_count(0.5 + 1e-13, 0.2)
    assert separating_hyperplane_count(0.5 + 1e-9, 0.2) == 1


def test_centralizer_roots():
    assert liecore.centralizer_roots(0) == {1, -1}
    assert liecore.centralizer_roots(0.3) == frozenset()
    assert liecore.centralizer_roots(Fraction(1, 2)) == {1, -1}


def test_centralizer_matches_matrix_realization():
    for x in (0.0, 0.25, 0.5, 0.3, 1.0, 1.5):
        hol = liecore.SU2.holonomy(x)
        central = np.allclose(hol, hol[0, 0] * np.eye(2), atol=1e-12)
        assert central == bool(liecore.centralizer_roots(x))


def test_coweights_are_integers():
    assert liecore.is_coweight(3)
    assert not liecore.is_coweight(Fraction(1, 2))
    assert liecore.is_coweight(2.0 + 1e-14)


@settings(max_examples=300, deadline=None)
@given(st.floats(-50, 50, allow_nan=False))
def test_projection_idempotent(x):
    p, w = alcove_project(x)
    assert 0 <= p.value <= 0.5
    assert abs(w(x) - p.value) <= 1e-12
    q, w2 = alcove_project(p.value)
    assert q.value == p.value
    assert w2(p.value) == p.value


def test_projection_idempotent_bulk():
    xs = np.random.default_rng(0).uniform(-50, 50, 10_000)
    for x in xs:
        p, _ = alcove_project(float(x))
        q, w = alcove_project(p.value)
        assert q.value == p.value and w(p.value) == p.value


@settings(max_examples=200, deadline=None)
@given(
    st.fractions(min_value=-20, max_value=20, max_denominator=50),
    st.booleans(),
    st.integers(-10, 10),
)
def test_projection_equivariant(x, r, n):
    w = AffineWeylElement(r, n)
    assert alcove_project(w(x))[0].value == alcove_project(x)[0].value


_off_wall = st.fractions(min_value=-10, max_value=10, max_denominator=30).filter(
    lambda v: liecore.wall_index(v) is None
)


@settings(max_examples=200, deadline=None)
@given(_off_wall, _off_wall, st.integers(-5, 5))
def test_count_symmetric_and_translation_invariant(a, b, n):
    c = separating_hyperplane_count(a, b)
    assert c == separating_hyperplane_count(b, a)
    assert c == separating_hyperplane_count(a + n, b + n)
