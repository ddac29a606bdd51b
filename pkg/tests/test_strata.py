from __future__ import annotations

from math import comb

import pytest

from momentflow import liecore, strata
from momentflow.errors import CertificateFailure


def _closed_form_oracle(g, top):
    """Schoolbook division of ``(1+t^3)^2g - t^2g (1+t)^2g`` by ``(1-t^2)(1-t^4)``."""
    deg = 6 * g
    num = [0] * (deg + 1)
    for k in range(2 * g + 1):
        num[3 * k] += comb(2 * g, k)
        num[2 * g + k] -= comb(2 * g, k)
    den = [1, 0, -1, 0, -1, 0, 1]  # (1 - t^2)(1 - t^4)
    while num and num[-1] == 0:
        num.pop()
    q = [0] * (len(num) - len(den) + 1)
    for i in range(len(q) - 1, -1, -1):
        c = num[i + len(den) - 1] * den[-1]
        q[i] = c
        for j, d in enumerate(den):
            num[i + j] -= c * d
    assert not any(num)
    assert len(q) - 1 == top
    return q


def test_equivariant_total_genus_zero_counts_partitions():
    s = strata.equivariant_total(0, 30)
    for n in range(31):
        count = sum(1 for b in range(n // 4 + 1) if (n - 4 * b) % 2 == 0)
        assert s[n] == count


def test_equivariant_total_low_coefficients():
    assert strata.equivariant_total(1, 10)[3] == 2
    assert strata.equivariant_total(2, 10)[0] == 1


def test_stratum_contribution_shift():
    c = strata.stratum_contribution(2, 1, 12)
    assert [c[i] for i in range(4)] == [0, 0, 0, 0]
    assert c[4] == 1
    assert strata.stratum_contribution(1, 1, 10)[2] == 1
    assert strata.stratum_contribution(3, 5, 8).degree() == -1


def test_index_examples():
    assert strata.index_of_stratum(2, 1) == 2
    assert strata.index_of_stratum(0, 3) == 4
    for lam in range(1, 101):
        assert strata.index_of_stratum(1, lam) - 1 == 2 * lam - 2


def test_critical_components():
    assert strata.critical_components(strata.MU_HALF, 3) == [1, 2, 3]
    assert strata.critical_components(strata.MU_HALF, 0) == []
    for lam in strata.critical_components(strata.MU_HALF, 10):
        assert liecore.centralizer_roots(lam) == {1, -1}


def test_genus_two_betti_numbers():
    res = strata.poincare_reduced(2)
    assert res.betti == [1, 0, 1, 4, 1, 0, 1]
    assert res.certificate.ok
    assert res.betti == _closed_form_oracle(2, 6)


@pytest.mark.parametrize("g", [2, 3, 4, 5])
def test_reduced_matches_division_oracle(g):
    res = strata.poincare_reduced(g)
    assert res.certificate.ok
    assert res.betti == _closed_form_oracle(g, 6 * g - 6)


def test_genus_three_frozen():
    # frozen after agreement with the division oracle above
    assert strata.poincare_reduced(3).betti == [1, 0, 1, 6, 2, 6, 16, 6, 2, 6, 1, 0, 1]


def test_genus_zero_certificate_fails():
    res = strata.poincare_reduced(0)
    assert not res.certificate.ok
    assert not res.certificate.polynomial
    with pytest.raises(CertificateFailure) as err:
        strata.poincare_reduced(0, strict=True)
    assert err.value.check == "polynomial"


def test_truncation_guard():
    with pytest.raises(ValueError):
        strata.poincare_reduced(2, lambda_max=1, T=12)


def test_truncation_sufficiency():
    small = strata.poincare_reduced(2, 4, 13)
    big = strata.poincare_reduced(2, 8, 29)
    assert small.series.coeffs == big.series.coeffs[:14]


@pytest.mark.parametrize("g", [1, 2, 3, 4])
def test_agrees_with_total_below_2g(g):
    res = strata.poincare_reduced(g)
    total = strata.equivariant_total(g, res.order)
    for i in range(2 * g):
        assert res.series[i] == total[i]


def test_json_shape():
    d = strata.poincare_reduced(2).as_dict()
    assert set(d) == {"g", "strata", "betti", "certificate"}
    assert set(d["certificate"]) == {"polynomial", "nonnegative", "palindromic", "matches_closed_form"}
    assert d["strata"][0] == {"lambda": 1, "index": 2}
