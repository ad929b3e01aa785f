"""Split octonions, the split-G2 cross product and the associative 3-form.

Coordinates are taken against the basis ``(1, i, j, k, l, li, lj, lk)``.  The
imaginary part uses indices 1..7 of that list, so ``dx^{abc}`` below refers
to imaginary coordinates with those labels.  Arithmetic is generic over the
coefficient type: rationals (``Fraction``) give exact results, floats and
complex numbers are used at the numerical boundary.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "BASIS",
    "SplitOctonion",
    "G2Forms",
    "multiply",
    "cross",
    "metric",
    "phi_eval",
    "phi_tensor",
    "g2_forms",
    "g2_basis_map",
    "g2_metric_E",
    "stabilizer_dimension",
    "derivation_defect",
    "multiplication_table",
    "PHI_MONOMIALS",
]

BASIS = ("1", "i", "j", "k", "l", "li", "lj", "lk")

_TABLE_TEXT = """\
1  i   j   k   l   li  lj  lk
i  -1  k   -j  -li l   -lk lj
j  -k  -1  i   -lj lk  l   -li
k  j   -i  -1  -lk -lj li  l
l  li  lj  lk  1   i   j   k
li -l  -lk lj  -i  1   k   -j
lj lk  -l  -li -j  -k  1   i
lk -lj li  -l  -k  j   -i  1
"""


def _parse_table() -> tuple[tuple[tuple[int, int], ...], ...]:
    rows = []
    for line in _TABLE_TEXT.strip().splitlines():
        row = []
        for entry in line.split():
            sign = -1 if entry.startswith("-") else 1
            row.append((sign, BASIS.index(entry.lstrip("-"))))
        rows.append(tuple(row))
    return tuple(rows)


# _TABLE[a][b] = (sign, c) means basis_a * basis_b = sign * basis_c
_TABLE = _parse_table()

# the seven monomials of phi in imaginary labels 1..7
PHI_MONOMIALS = ((1, 2, 3), (1, 4, 5), (1, 6, 7), (2, 4, 6), (2, 7, 5), (3, 4, 7), (3, 5, 6))

# diagonal of N restricted to the imaginary part: +1 on i, j, k and -1 on l, li, lj, lk
_IM_SIGNS = (1, 1, 1, -1, -1, -1, -1)


@dataclass(frozen=True)
class SplitOctonion:
    coords: tuple

    def __post_init__(self) -> None:
        if len(self.coords) != 8:
            raise ValueError("a split octonion has 8 coordinates")

    @classmethod
    def basis(cls, name: str, scale=1) -> SplitOctonion:
        c = [0] * 8
        c[BASIS.index(name)] = scale
        return cls(tuple(c))

    @classmethod
    def imaginary(cls, v: Sequence) -> SplitOctonion:
        if len(v) != 7:
            raise ValueError("imaginary part has 7 coordinates")
        return cls((0 * v[0],) + tuple(v))

    def __add__(self, other: SplitOctonion) -> SplitOctonion:
        return SplitOctonion(tuple(a + b for a, b in zip(self.coords, other.coords)))

    def __sub__(self, other: SplitOctonion) -> SplitOctonion:
        return SplitOctonion(tuple(a - b for a, b in zip(self.coords, other.coords)))

    def __neg__(self) -> SplitOctonion:
        return SplitOctonion(tuple(-a for a in self.coords))

    def __mul__(self, other):
        if isinstance(other, SplitOctonion):
            return multiply(self, other)
        return SplitOctonion(tuple(a * other for a in self.coords))

    def __rmul__(self, scalar) -> SplitOctonion:
        return SplitOctonion(tuple(scalar * a for a in self.coords))

    def conj(self) -> SplitOctonion:
        return SplitOctonion((self.coords[0],) + tuple(-a for a in self.coords[1:]))

    @property
    def real(self):
        return self.coords[0]

    @property
    def im(self) -> tuple:
        return self.coords[1:]

    def is_imaginary(self) -> bool:
        return self.coords[0] == 0

    def norm(self):
        """N(x) = x0^2 + x1^2 + x2^2 + x3^2 - x4^2 - x5^2 - x6^2 - x7^2."""
        c = self.coords
        return sum(a * a for a in c[:4]) - sum(a * a for a in c[4:])


def multiply(x: SplitOctonion, y: SplitOctonion) -> SplitOctonion:
    """Bilinear extension of the multiplication table."""
    out = [0 * x.coords[0] * y.coords[0]] * 8
    for a, xa in enumerate(x.coords):
        if xa == 0:
            continue
        row = _TABLE[a]
        for b, yb in enumerate(y.coords):
            if yb == 0:
                continue
            sign, c = row[b]
            out[c] = out[c] + sign * xa * yb
    return SplitOctonion(tuple(out))


def cross(x: SplitOctonion, y: SplitOctonion) -> SplitOctonion:
    """x cross y = (xy - yx)/2 on imaginary octonions."""
    if not (x.is_imaginary() and y.is_imaginary()):
        raise ValueError("cross product is defined on imaginary octonions")
    d = multiply(x, y) - multiply(y, x)
    half = Fraction(1, 2) if _is_exact(d.coords) else 0.5
    return d * half


def metric(x: SplitOctonion, y: SplitOctonion):
    """g(x, y) = Re(x conj(y)), symmetric bilinear of signature (4, 4)."""
    return multiply(x, y.conj()).real


def phi_eval(a: SplitOctonion, b: SplitOctonion, c: SplitOctonion):
    """phi(a, b, c) = g(a x b, c)."""
    return metric(cross(a, b), c)


def _is_exact(vals: Iterable) -> bool:
    return all(isinstance(v, (int, Fraction)) for v in vals)


def _perm_sign(p: Sequence[int]) -> int:
    p = list(p)
    sign = 1
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                sign = -sign
    return sign


@lru_cache(maxsize=None)
def _phi_int() -> np.ndarray:
    t = np.zeros((7, 7, 7), dtype=int)
    for mono in PHI_MONOMIALS:
        for perm in itertools.permutations(range(3)):
            t[tuple(mono[k] - 1 for k in perm)] = _perm_sign(perm)
    return t


def phi_tensor() -> np.ndarray:
    """Antisymmetric integer tensor of the 7-term expression for phi."""
    return _phi_int().copy()


@dataclass(frozen=True)
class G2Forms:
    phi3: np.ndarray
    psi4: np.ndarray
    metric_g: np.ndarray

    def monomials(self) -> list[tuple[int, int, int]]:
        """Sorted index triples (1-based) carrying a nonzero phi coefficient."""
        idx = np.argwhere(self.phi3 != 0)
        return sorted({tuple(int(v) + 1 for v in row) for row in idx if row[0] < row[1] < row[2]})


@lru_cache(maxsize=None)
def _forms() -> G2Forms:
    g = np.diag(_IM_SIGNS).astype(int)
    phi = _phi_int()
    # raise indices with the diagonal metric, then contract with epsilon
    up = np.einsum("a,b,c,abc->abc", *(np.array(_IM_SIGNS),) * 3, phi)
    psi = np.zeros((7,) * 4, dtype=int)
    for perm in itertools.permutations(range(7)):
        a, b, c, *rest = perm
        val = up[a, b, c]
        if val:
            psi[tuple(rest)] += _perm_sign(perm) * val
    # each (a, b, c) ordering appears 3! times; |det g| = 1
    psi //= 6
    return G2Forms(phi, psi, g)


def g2_forms() -> G2Forms:
    """phi, psi = *phi under the (3, 4) metric, and the Gram matrix."""
    f = _forms()
    return G2Forms(f.phi3.copy(), f.psi4.copy(), f.metric_g.copy())


def _imag_vec(o: SplitOctonion) -> np.ndarray:
    return np.array(o.im, dtype=complex)


def g2_basis_map() -> np.ndarray:
    """Complex 7x7 matrix whose columns express e_3, ..., e_{-3} in the
    imaginary octonion coordinates (i, j, k, l, li, lj, lk).

    The positive basis vectors are built from products such as ``j*l``
    evaluated with the table; ``e_{-m}`` is the complex conjugate of ``e_m``.
    """
    one = lambda n: SplitOctonion.basis(n, 1.0)  # noqa: E731
    s = 1 / np.sqrt(2.0)
    jl = _imag_vec(one("j") * one("l"))
    kl = _imag_vec(one("k") * one("l"))
    il = _imag_vec(one("i") * one("l"))
    e3 = s * (jl + 1j * kl)
    e2 = s * (_imag_vec(one("j")) + 1j * _imag_vec(one("k")))
    e1 = s * (_imag_vec(one("l")) + 1j * il)
    e0 = _imag_vec(one("i"))
    cols = [e3, e2, e1, e0, e1.conj(), e2.conj(), e3.conj()]
    return np.array(cols).T


def g2_metric_E() -> np.ndarray:
    """Anti-diagonal Gram matrix (-1, 1, -1, 1, -1, 1, -1) on e_3..e_{-3}."""
    return np.fliplr(np.diag([-1.0, 1, -1, 1, -1, 1, -1]))


def derivation_defect(X: np.ndarray, tensor: np.ndarray | None = None) -> float:
    """Max entry of the derivation action of X on an antisymmetric 3-tensor.

    X acts on imaginary-octonion coordinates (column vectors).
    """
    t = _phi_int() if tensor is None else tensor
    d = (
        np.einsum("da,dbc->abc", X, t)
        + np.einsum("db,adc->abc", X, t)
        + np.einsum("dc,abd->abc", X, t)
    )
    return float(np.abs(d).max())


def _rank_exact(rows: list[list[Fraction]]) -> int:
    m = [list(r) for r in rows]
    rank, ncol = 0, len(m[0]) if m else 0
    for col in range(ncol):
        piv = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        p = m[rank][col]
        for r in range(len(m)):
            if r != rank and m[r][col] != 0:
                f = m[r][col] / p
                m[r] = [a - f * b for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


def stabilizer_dimension() -> int:
    """Dimension of {X in so(3,4) : X . phi = 0}, by exact elimination."""
    g = _forms().metric_g
    phi = _phi_int()
    rows: list[list[Fraction]] = []
    n = 7
    # unknown X[p, q] flattened to 7 * p + q
    for a, b in itertools.combinations_with_replacement(range(n), 2):
        row = [Fraction(0)] * (n * n)
        # (X^T g + g X)_{ab} = X_{ba} g_bb ... with diagonal g
        row[n * b + a] += g[b, b]
        row[n * a + b] += g[a, a]
        rows.append(row)
    for a, b, c in itertools.combinations(range(n), 3):
        row = [Fraction(0)] * (n * n)
        for d in range(n):
            row[n * d + a] += phi[d, b, c]
            row[n * d + b] += phi[a, d, c]
            row[n * d + c] += phi[a, b, d]
        rows.append(row)
    return n * n - _rank_exact(rows)


def multiplication_table() -> list[list[str]]:
    """The table as strings, row factor times column factor."""
    return [[("-" if s < 0 else "") + BASIS[c] for s, c in row] for row in _TABLE]
