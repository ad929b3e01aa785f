"""Affine Dynkin data, realized root systems, principal sl2 triples and
cyclic Higgs fields.

Conventions
-----------
Cartan matrices follow ``A[i, j] = alpha_j(h_i)`` where ``h_i`` is the coroot
of ``alpha_i``.  Marks ``a`` satisfy ``A @ a = 0`` and comarks ``c`` satisfy
``c @ A = 0``.  The affine node is always index 0.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import gcd, lcm

import numpy as np

__all__ = [
    "AffineDiagram",
    "RootDatum",
    "PrincipalSL2",
    "CyclicHiggsField",
    "build_affine_diagram",
    "build_root_datum",
    "fold_restricted_roots",
    "principal_sl2",
    "cyclic_higgs_field",
    "exponents",
    "finite_roots",
    "parse_simple_type",
    "matrix_to_json",
    "matrix_from_json",
]


# ---------------------------------------------------------------------------
# finite root systems
# ---------------------------------------------------------------------------

_ALIASES = {"sl2": ("A", 1), "sl3": ("A", 2), "sp4": ("C", 2), "g2": ("G", 2)}


def parse_simple_type(name: str) -> tuple[str, int]:
    """Parse ``"A_3"``, ``"E6"``, ``"sl3"`` ... into ``(letter, rank)``."""
    key = name.strip()
    if key.lower() in _ALIASES:
        return _ALIASES[key.lower()]
    m = re.fullmatch(r"([A-Ga-g])_?\{?(\d+)\}?", key)
    if not m:
        raise ValueError(f"unsupported simple type {name!r}")
    letter, rank = m.group(1).upper(), int(m.group(2))
    ok = {
        "A": rank >= 1,
        "B": rank >= 2,
        "C": rank >= 2,
        "D": rank >= 3,
        "E": rank in (6, 7, 8),
        "F": rank == 4,
        "G": rank == 2,
    }[letter]
    if not ok:
        raise ValueError(f"unsupported simple type {name!r}")
    return letter, rank


def _simple_roots(letter: str, n: int) -> np.ndarray:
    """Simple roots in an orthonormal epsilon basis (Bourbaki numbering)."""

    def eps(dim: int, *pairs: tuple[int, float]) -> np.ndarray:
        v = np.zeros(dim)
        for k, c in pairs:
            v[k] += c
        return v

    if letter == "A":
        return np.array([eps(n + 1, (i, 1), (i + 1, -1)) for i in range(n)])
    if letter in "BCD":
        rows = [eps(n, (i, 1), (i + 1, -1)) for i in range(n - 1)]
        if letter == "B":
            rows.append(eps(n, (n - 1, 1)))
        elif letter == "C":
            rows.append(eps(n, (n - 1, 2)))
        else:
            rows.append(eps(n, (n - 2, 1), (n - 1, 1)))
        return np.array(rows)
    if letter == "E":
        rows = [0.5 * np.array([1, -1, -1, -1, -1, -1, -1, 1.0]), eps(8, (0, 1), (1, 1))]
        rows += [eps(8, (k, 1), (k - 1, -1)) for k in range(1, 7)]
        return np.array(rows[:n])
    if letter == "F":
        return np.array(
            [eps(4, (1, 1), (2, -1)), eps(4, (2, 1), (3, -1)), eps(4, (3, 1)), 0.5 * np.array([1, -1, -1, -1.0])]
        )
    if letter == "G":
        return np.array([eps(3, (0, 1), (1, -1)), eps(3, (0, -2), (1, 1), (2, 1))])
    raise ValueError(letter)


def _int_matrix(m: np.ndarray) -> np.ndarray:
    out = np.rint(m).astype(int)
    if not np.allclose(out, m, atol=1e-9):
        raise ArithmeticError("matrix is not integral")
    return out


@dataclass(frozen=True)
class _FiniteSystem:
    letter: str
    rank: int
    simple: np.ndarray  # rows: simple roots in epsilon coordinates
    lengths: tuple[Fraction, ...]  # squared lengths of simple roots
    cartan: np.ndarray
    positive: tuple[tuple[int, ...], ...]  # positive roots, simple-root coefficients


def _frac(x: float) -> Fraction:
    return Fraction(x).limit_denominator(64)


@lru_cache(maxsize=None)
def finite_roots(letter: str, n: int) -> _FiniteSystem:
    """Positive roots of a finite root system, generated by reflections."""
    simple = _simple_roots(letter, n)
    gram = simple @ simple.T
    d = np.diag(gram)
    cartan = _int_matrix(2 * gram / d[:, None])
    # Weyl closure in integer coefficient space: s_i(b) = b - <b, a_i^v> a_i
    start = [tuple(int(k == i) for k in range(n)) for i in range(n)]
    seen = set(start)
    frontier = list(start)
    while frontier:
        nxt = []
        for b in frontier:
            for i in range(n):
                pair = sum(b[j] * cartan[i, j] for j in range(n))
                c = list(b)
                c[i] -= pair
                t = tuple(c)
                if t not in seen:
                    seen.add(t)
                    nxt.append(t)
        frontier = nxt
    positive = tuple(sorted((t for t in seen if all(x >= 0 for x in t)), key=lambda t: (sum(t), t)))
    return _FiniteSystem(letter, n, simple, tuple(_frac(x) for x in d), cartan, positive)


def exponents(simple_type: str) -> list[int]:
    """Exponents of a simple Lie algebra from its height distribution."""
    letter, n = parse_simple_type(simple_type)
    fs = finite_roots(letter, n)
    heights = [sum(b) for b in fs.positive]
    top = max(heights)
    count = [heights.count(k) for k in range(top + 2)]
    out: list[int] = []
    for k in range(1, top + 1):
        out += [k] * (count[k] - count[k + 1])
    return sorted(out)


# ---------------------------------------------------------------------------
# affine diagrams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineDiagram:
    label: str
    cartan: np.ndarray
    marks: tuple[int, ...]
    comarks: tuple[int, ...]
    finite_type: tuple[str, int]
    alpha0_coeffs: tuple[Fraction, ...]  # alpha_0 = sum alpha0_coeffs[i] alpha_{i+1}
    lengths: tuple[Fraction, ...]  # squared lengths of alpha_0..alpha_l

    @property
    def rank(self) -> int:
        """Number l of finite nodes."""
        return self.cartan.shape[0] - 1

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "cartan": self.cartan.tolist(),
            "marks": list(self.marks),
            "comarks": list(self.comarks),
        }


_LABEL = re.compile(r"([A-G])_?\{?(\d+)\}?\^\{?\((\d)\)\}?")


def _normalize_label(label: str) -> tuple[str, int, int]:
    m = _LABEL.fullmatch(label.replace(" ", ""))
    if not m:
        raise ValueError(f"unsupported affine diagram label {label!r}")
    return m.group(1), int(m.group(2)), int(m.group(3))


def _integer_vector(fr: list[Fraction]) -> tuple[int, ...]:
    den = lcm(*(f.denominator for f in fr))
    ints = [int(f * den) for f in fr]
    g = 0
    for v in ints:
        g = gcd(g, v)
    return tuple(v // g for v in ints)


@lru_cache(maxsize=None)
def build_affine_diagram(label: str) -> AffineDiagram:
    """Build an affine Cartan matrix with marks and comarks.

    Supported labels: every untwisted ``X_n^(1)`` together with the twisted
    ``A_{2n}^(2)`` and ``D_{r+1}^(2)``.
    """
    letter, n, twist = _normalize_label(label)
    if twist == 1:
        finite = parse_simple_type(f"{letter}_{n}")
        fs = finite_roots(*finite)
        theta = fs.positive[-1]
        alpha0 = tuple(Fraction(-t) for t in theta)
    elif twist == 2 and letter == "A" and n % 2 == 0 and n >= 2:
        finite = ("A", 1) if n == 2 else ("C", n // 2)
        fs = finite_roots(*finite)
        theta = fs.positive[-1]
        alpha0 = tuple(Fraction(-t, 2) for t in theta)
    elif twist == 2 and letter == "D" and n >= 3:
        finite = ("B", n - 1)
        fs = finite_roots(*finite)
        long_len = max(fs.lengths)
        short = [b for b in fs.positive if _root_length(fs, b) < long_len]
        alpha0 = tuple(Fraction(-t) for t in short[-1])
    else:
        raise ValueError(f"unsupported affine diagram label {label!r}")
    l = fs.rank
    simple_gram = np.array([[_ip(fs, i, j) for j in range(l)] for i in range(l)], dtype=object)
    a0 = list(alpha0)

    def ip_aff(i: int, j: int) -> Fraction:
        vi = [Fraction(int(k == i - 1)) for k in range(l)] if i else a0
        vj = [Fraction(int(k == j - 1)) for k in range(l)] if j else a0
        return sum((vi[p] * vj[q] * simple_gram[p, q] for p in range(l) for q in range(l)), Fraction(0))

    size = l + 1
    lengths = [ip_aff(i, i) for i in range(size)]
    cart = np.zeros((size, size), dtype=int)
    for i in range(size):
        for j in range(size):
            val = 2 * ip_aff(i, j) / lengths[i]
            if val.denominator != 1:
                raise ArithmeticError("non-integral Cartan entry")
            cart[i, j] = int(val)
    # marks: a_0 alpha_0 + sum a_i alpha_i = 0 with alpha_0 = sum alpha0_i alpha_i
    marks = _integer_vector([Fraction(1)] + [-c for c in a0])
    # comarks: alpha_0^v = (2/|a0|^2) alpha_0 = sum_i (a0_i |a_i|^2 / |a0|^2) alpha_i^v
    comarks = _integer_vector([Fraction(1)] + [-a0[i] * lengths[i + 1] / lengths[0] for i in range(l)])
    scale = Fraction(2) / max(lengths[1:])
    text = f"{letter}_{n}^({twist})"
    return AffineDiagram(
        label=text,
        cartan=cart,
        marks=marks,
        comarks=comarks,
        finite_type=finite,
        alpha0_coeffs=tuple(alpha0),
        lengths=tuple(x * scale for x in lengths),
    )


def _ip(fs: _FiniteSystem, i: int, j: int) -> Fraction:
    # (alpha_i, alpha_j) = A_ij |alpha_i|^2 / 2
    return Fraction(int(fs.cartan[i, j])) * fs.lengths[i] / 2


def _root_length(fs: _FiniteSystem, b: tuple[int, ...]) -> Fraction:
    n = fs.rank
    return sum((b[i] * b[j] * _ip(fs, i, j) for i in range(n) for j in range(n)), Fraction(0))


def fold_restricted_roots(simple_type: str) -> str:
    """Affine diagram governing the reduced Toda system after restricting
    roots to the fixed subspace of the opposition involution."""
    letter, n = parse_simple_type(simple_type)
    if letter == "A" and n >= 2 and n % 2 == 0:
        return f"A_{n}^(2)"
    if letter == "A" and n >= 3 and n % 2 == 1:
        return f"C_{(n + 1) // 2}^(1)"
    if letter == "D" and n % 2 == 1:
        return f"B_{n - 1}^(1)"
    if letter == "E" and n == 6:
        return "F_4^(1)"
    return f"{letter}_{n}^(1)"


# ---------------------------------------------------------------------------
# realized root data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RootDatum:
    diagram: AffineDiagram
    basis_h: np.ndarray  # rows h_1..h_l
    duals_alpha: np.ndarray  # rows alpha_1..alpha_l (as vectors via the inner product)
    h0: np.ndarray
    alpha0: np.ndarray
    inner: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis_h.shape[0]

    def all_h(self) -> np.ndarray:
        """Rows h_0, h_1, ..., h_l."""
        return np.vstack([self.h0, self.basis_h])

    def all_alpha(self) -> np.ndarray:
        """Rows alpha_0, alpha_1, ..., alpha_l."""
        return np.vstack([self.alpha0, self.duals_alpha])

    def pairing(self) -> np.ndarray:
        """Matrix P[i, j] = alpha_i(h_j), i, j in 0..l."""
        return self.all_alpha() @ self.inner @ self.all_h().T


def build_root_datum(diagram: AffineDiagram | str) -> RootDatum:
    """Realize h_i and alpha_i in Euclidean R^l (long roots squared length 2).

    ``alpha_i = 2 h_i / <h_i, h_i>``; the affine node uses
    ``h_0 = -(1/c_0) sum c_i h_i`` and ``alpha_0 = -(1/a_0) sum a_i alpha_i``.
    """
    if isinstance(diagram, str):
        diagram = build_affine_diagram(diagram)
    A = diagram.cartan
    l = diagram.rank
    d = np.array([float(x) for x in diagram.lengths])
    fin = A[1:, 1:]
    gram = d[1:, None] * fin / 2.0
    alphas = np.linalg.cholesky(gram)  # rows are alpha_i with <a_i, a_j> = gram_ij
    hs = 2 * alphas / d[1:, None]
    a, c = diagram.marks, diagram.comarks
    alpha0 = -sum(a[i] * alphas[i - 1] for i in range(1, l + 1)) / a[0]
    h0 = -sum(c[i] * hs[i - 1] for i in range(1, l + 1)) / c[0]
    return RootDatum(diagram, hs, alphas, h0, alpha0, np.eye(l))


# ---------------------------------------------------------------------------
# principal sl2 triples in explicit representations
# ---------------------------------------------------------------------------


def _E(n: int, i: int, j: int) -> np.ndarray:
    m = np.zeros((n, n), dtype=complex)
    m[i, j] = 1.0
    return m


@dataclass(frozen=True)
class PrincipalSL2:
    label: str
    rep_dim: int
    x: np.ndarray
    e: np.ndarray
    e_tilde: np.ndarray
    e_top: np.ndarray
    M: int
    r_coeffs: tuple[float, ...]
    params: dict = field(default_factory=dict)

    def commutator_defects(self) -> tuple[float, float, float]:
        x, e, f = self.x, self.e, self.e_tilde
        br = lambda a, b: a @ b - b @ a  # noqa: E731
        return (
            float(np.linalg.norm(br(x, e) - e)),
            float(np.linalg.norm(br(x, f) + f)),
            float(np.linalg.norm(br(e, f) - x)),
        )

    def cyclic_element(self) -> np.ndarray:
        """g = exp(2 pi i x / (M + 1)) (x is diagonal)."""
        return np.diag(np.exp(2j * np.pi * np.diag(self.x) / (self.M + 1)))


def _chain_raising(weights: np.ndarray, ftil: np.ndarray) -> np.ndarray:
    """Given diagonal weights and a lowering chain ftil, return e with
    [e, ftil] = x.  Works on each chain component separately."""
    n = len(weights)
    e = np.zeros((n, n), dtype=complex)
    # ftil[j, i] != 0 means e_i -> e_j ; build p_i = s_i t_i recursively
    prev = {}
    for i in range(n):
        js = np.nonzero(np.abs(ftil[:, i]) > 0)[0]
        if len(js) > 1:
            raise ValueError("lowering operator is not a chain")
        if len(js) == 1:
            prev[int(js[0])] = i
    starts = [i for i in range(n) if i not in prev]
    for s in starts:
        chain = [s]
        nxt = {v: k for k, v in prev.items()}
        while chain[-1] in nxt:
            chain.append(nxt[chain[-1]])
        # along chain v0 -> v1 -> ...: p_k - p_{k-1} = weight(v_k), p_{-1} = 0
        p = 0.0
        for k in range(len(chain) - 1):
            p += weights[chain[k]]
            t = ftil[chain[k + 1], chain[k]]
            e[chain[k], chain[k + 1]] = p / t
    return e


def _sl2_fund() -> PrincipalSL2:
    s = np.sqrt(0.5)
    x = np.diag([0.5, -0.5]).astype(complex)
    e = s * _E(2, 0, 1)
    f = s * _E(2, 1, 0)
    return PrincipalSL2("sl2_fund", 2, x, e, f, e.copy(), 1, (s,))


def _sl3_fund() -> PrincipalSL2:
    x = np.diag([1.0, 0.0, -1.0]).astype(complex)
    e = _E(3, 0, 1) + _E(3, 1, 2)
    f = _E(3, 1, 0) + _E(3, 2, 1)
    return PrincipalSL2("sl3_fund", 3, x, e, f, _E(3, 0, 2), 2, (1.0, 1.0))


def _sp4_fund() -> PrincipalSL2:
    a, b = np.sqrt(1.5), np.sqrt(2.0)
    x = np.diag([1.5, 0.5, -0.5, -1.5]).astype(complex)
    e = a * _E(4, 0, 1) + b * _E(4, 1, 2) + a * _E(4, 2, 3)
    return PrincipalSL2("sp4_fund", 4, x, e, e.T.copy(), _E(4, 0, 3), 3, (a, b))


def _g2_7dim() -> PrincipalSL2:
    sup = [np.sqrt(3), np.sqrt(5), 1j * np.sqrt(6), 1j * np.sqrt(6), np.sqrt(5), np.sqrt(3)]
    x = np.diag([3.0, 2, 1, 0, -1, -2, -3]).astype(complex)
    e = sum(c * _E(7, k, k + 1) for k, c in enumerate(sup))
    f = e.conj().T
    top = _E(7, 0, 5) + _E(7, 1, 6)
    return PrincipalSL2("g2_7dim", 7, x, e, f, top, 5, (np.sqrt(3), np.sqrt(5), np.sqrt(6)))


def so_frame_indices(r: int, parity: str) -> list[int]:
    """Frame labels of the harmonic-sequence bundle, in matrix order."""
    if parity == "even":
        return list(range(-r, r + 1)) + [r + 1]
    if parity == "odd":
        return list(range(-r - 1, r + 2))
    raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")


def _so_harmonic(r: int, parity: str, eps0: int = 1, eps_top: int = 1) -> PrincipalSL2:
    if r < 1:
        raise ValueError("r must be >= 1")
    labels = so_frame_indices(r, parity)
    idx = {k: p for p, k in enumerate(labels)}
    n = len(labels)
    ftil = np.zeros((n, n), dtype=complex)
    top = np.zeros((n, n), dtype=complex)

    def put(m, src, dst, c):
        m[idx[dst], idx[src]] += c

    for i in range(0, r):
        put(ftil, i, i + 1, 1.0)
    for i in range(2, r + 1):
        put(ftil, -i, -i + 1, -1.0)
    put(ftil, -1, 0, -float(eps0))
    if parity == "even":
        put(top, r, r + 1, 1.0)
        put(top, r + 1, -r, -float(eps_top))
        weights = np.array([-k if k != r + 1 else 0 for k in labels], dtype=float)
        M = r
    else:
        s = np.sqrt(0.5)
        put(ftil, r, r + 1, s)
        put(ftil, -r - 1, -r, -s)
        put(top, r, -r - 1, s)
        put(top, r + 1, -r, -s)
        weights = np.array([-k for k in labels], dtype=float)
        M = 2 * r + 1
    x = np.diag(weights).astype(complex)
    e = _chain_raising(weights, ftil)
    rc = tuple(float(abs(v)) for v in ftil[np.abs(ftil) > 0])
    return PrincipalSL2(
        f"so_pq_harmonic({r},{parity})",
        n,
        x,
        e,
        ftil,
        top,
        M,
        rc,
        {"r": r, "parity": parity, "eps0": eps0, "eps_top": eps_top, "labels": labels},
    )


_SO = re.compile(r"so_pq_harmonic\((\d+),\s*(even|odd)\)")


def principal_sl2(rep_label: str, **params) -> PrincipalSL2:
    """Explicit principal sl2 triple for a named representation.

    ``so_pq_harmonic(r, parity)`` accepts keyword parameters ``eps0``
    (the sign h_0) and, for the even case, ``eps_top``.
    """
    fixed = {"sl2_fund": _sl2_fund, "sl3_fund": _sl3_fund, "sp4_fund": _sp4_fund, "g2_7dim": _g2_7dim}
    if rep_label in fixed:
        return fixed[rep_label]()
    m = _SO.fullmatch(rep_label.replace(" ", ""))
    if m:
        return _so_harmonic(int(m.group(1)), m.group(2), **params)
    raise ValueError(f"unsupported representation label {rep_label!r}")


@dataclass(frozen=True)
class CyclicHiggsField:
    rep: PrincipalSL2
    q_coeff: complex
    matrix: np.ndarray

    def eigen_defect(self) -> float:
        """|| Ad_g Phi - exp(2 pi i M/(M+1)) Phi || (Frobenius)."""
        g = self.rep.cyclic_element()
        om = np.exp(2j * np.pi * self.rep.M / (self.rep.M + 1))
        return float(np.linalg.norm(g @ self.matrix @ np.linalg.inv(g) - om * self.matrix))


def cyclic_higgs_field(rep: PrincipalSL2, q: complex) -> CyclicHiggsField:
    return CyclicHiggsField(rep, complex(q), rep.e_tilde + complex(q) * rep.e_top)


# ---------------------------------------------------------------------------
# JSON helpers
# ---------------------------------------------------------------------------


def matrix_to_json(m: np.ndarray) -> list:
    """Nested lists of [re, im] pairs."""
    m = np.asarray(m, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def matrix_from_json(data: list) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in data])
