from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semiflat import octonion as O
from semiflat.lie_core import principal_sl2
from semiflat.octonion import SplitOctonion

# ---------------------------------------------------------------------------
# independent oracle: Cayley-Dickson doubling of the quaternions with l^2 = +1
# ---------------------------------------------------------------------------


def _qmul(p, q):
    a1, b1, c1, d1 = p
    a2, b2, c2, d2 = q
    return (
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    )


def _qconj(p):
    return (p[0], -p[1], -p[2], -p[3])


def _cd(x, y):
    """(a + b l)(c + d l) = (ac + conj(d) b) + (d a + b conj(c)) l."""
    a, b = x
    c, d = y
    first = tuple(u + v for u, v in zip(_qmul(a, c), _qmul(_qconj(d), b)))
    second = tuple(u + v for u, v in zip(_qmul(d, a), _qmul(b, _qconj(c))))
    return first, second


def _to_cd(o: SplitOctonion):
    # l i, l j, l k correspond to (0, -i), (0, -j), (0, -k) in the doubled pair
    c = o.coords
    return (c[0], c[1], c[2], c[3]), (c[4], -c[5], -c[6], -c[7])


def _from_cd(pair) -> SplitOctonion:
    a, b = pair
    return SplitOctonion((a[0], a[1], a[2], a[3], b[0], -b[1], -b[2], -b[3]))


_frac = st.fractions(min_value=-5, max_value=5, max_denominator=7)
octos = st.lists(_frac, min_size=8, max_size=8).map(lambda v: SplitOctonion(tuple(v)))
imag = st.lists(_frac, min_size=7, max_size=7).map(SplitOctonion.imaginary)


def _unit(name):
    return SplitOctonion.basis(name)


def test_table_agrees_with_cayley_dickson_everywhere():
    for a, b in itertools.product(O.BASIS, repeat=2):
        x, y = _unit(a), _unit(b)
        assert O.multiply(x, y) == _from_cd(_cd(_to_cd(x), _to_cd(y))), (a, b)


@pytest.mark.parametrize("a, b, want", [("i", "j", "k"), ("l", "l", "1"), ("li", "li", "1"), ("j", "i", "-k"), ("i", "i", "-1")])
def test_table_entries(a, b, want):
    sign = -1 if want.startswith("-") else 1
    assert O.multiply(_unit(a), _unit(b)) == SplitOctonion.basis(want.lstrip("-"), sign)


def test_cross_examples():
    assert O.cross(_unit("i"), _unit("j")) == _unit("k")
    x = _unit("l")
    y = _unit("li")
    want = (O.multiply(x, y) - O.multiply(y, x)) * Fraction(1, 2)
    assert O.cross(x, y) == want
    assert O.cross(x, y) == SplitOctonion.basis("i")


def test_cross_rejects_real_part():
    with pytest.raises(ValueError):
        O.cross(_unit("1"), _unit("i"))


@settings(max_examples=100, deadline=None)
@given(x=octos, y=octos)
def test_composition(x, y):
    assert O.multiply(x, y).norm() == x.norm() * y.norm()


@settings(max_examples=100, deadline=None)
@given(x=octos, y=octos)
def test_alternativity(x, y):
    assert O.multiply(x, O.multiply(x, y)) == O.multiply(O.multiply(x, x), y)
    assert O.multiply(O.multiply(y, x), x) == O.multiply(y, O.multiply(x, x))


@settings(max_examples=60, deadline=None)
@given(x=octos)
def test_norm_is_x_times_conjugate(x):
    prod = O.multiply(x, x.conj())
    assert prod.real == x.norm()
    assert all(c == 0 for c in prod.im)


@settings(max_examples=60, deadline=None)
@given(x=imag, y=imag)
def test_cross_antisymmetric_and_imaginary(x, y):
    c = O.cross(x, y)
    assert c.is_imaginary()
    assert O.cross(y, x) == -c
    assert all(v == 0 for v in O.cross(x, x).coords)


@settings(max_examples=60, deadline=None)
@given(x=imag, y=imag)
def test_metric_matches_symmetrized_product(x, y):
    sym = (O.multiply(x, y) + O.multiply(y, x)) * Fraction(-1, 2)
    assert sym.real == O.metric(x, y)
    g = O.g2_forms().metric_g
    assert O.metric(x, y) == sum(g[a, b] * x.im[a] * y.im[b] for a in range(7) for b in range(7))


def _phi_by_monomials(a, b, c):
    total = Fraction(0)
    for mono in O.PHI_MONOMIALS:
        idx = [m - 1 for m in mono]
        M = [[v.im[i] for i in idx] for v in (a, b, c)]
        det = (
            M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1])
            - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0])
            + M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0])
        )
        total += det
    return total


@settings(max_examples=60, deadline=None)
@given(a=imag, b=imag, c=imag)
def test_phi_matches_seven_term_expansion(a, b, c):
    val = O.phi_eval(a, b, c)
    assert val == _phi_by_monomials(a, b, c)
    assert O.phi_eval(b, a, c) == -val
    assert O.phi_eval(a, c, b) == -val
    assert O.phi_eval(a, a, c) == 0


def test_phi_basis_triple():
    e = [SplitOctonion.imaginary([int(k == j) for k in range(7)]) for j in range(7)]
    assert O.phi_eval(e[0], e[1], e[2]) == 1


def test_phi_has_the_seven_monomials():
    mons = O.g2_forms().monomials()
    assert len(mons) == 7
    t = O.phi_tensor()
    for mono in O.PHI_MONOMIALS:
        i, j, k = (m - 1 for m in mono)
        assert abs(t[i, j, k]) == 1


def test_psi_is_hodge_dual_with_seven_terms():
    f = O.g2_forms()
    nonzero = {tuple(sorted(idx)) for idx in np.argwhere(f.psi4 != 0).tolist()}
    assert len(nonzero) == 7
    # phi ^ psi = 7 vol
    total = 0
    for perm in itertools.permutations(range(7)):
        a, b, c, *rest = perm
        if f.phi3[a, b, c] and f.psi4[tuple(rest)]:
            inv = sum(1 for i in range(7) for j in range(i + 1, 7) if perm[i] > perm[j])
            total += (-1) ** inv * f.phi3[a, b, c] * f.psi4[tuple(rest)]
    assert total // (6 * 24) == 7


def test_stabilizer_dimension():
    assert O.stabilizer_dimension() == 14


def test_basis_map_examples():
    B = O.g2_basis_map()
    assert np.allclose(B[:, 3], [1, 0, 0, 0, 0, 0, 0])
    g = O.g2_forms().metric_g
    E = O.g2_metric_E()
    # <e_3, e_-3> through E and through the octonion metric
    assert np.isclose(B[:, 0] @ g @ B[:, 6], E[0, 6])
    assert np.allclose(B.T @ g @ B, E, atol=1e-15)


def test_g2_matrices_annihilate_phi():
    B = O.g2_basis_map()
    Binv = np.linalg.inv(B)
    rep = principal_sl2("g2_7dim")
    for X in (rep.x, rep.e, rep.e_tilde, rep.e_top):
        Y = B @ X @ Binv
        assert O.derivation_defect(Y) < 1e-12


def test_multiplication_table_strings():
    table = O.multiplication_table()
    assert table[1][2] == "k"
    assert table[4][4] == "1"
    assert table[5][5] == "1"
