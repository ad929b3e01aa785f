"""Affine Toda field equations on rectangular grids.

Every system is stored as a list of exponential terms.  With unknown
channels ``w_c`` the equations read

    2 (w_c)_{z zbar} = sum_t  coeff_t q^m qbar^n exp(2 a_t . w) b_t[c]

and ``(w)_{z zbar}`` is a quarter of the 5-point Laplacian.  For the general
family the channels are the coordinates of Omega in the basis h_1 .. h_l,
so ``a_t`` is a column of the Cartan matrix and ``b_t`` is the coordinate
vector of ``h_t``.  The named systems use their own scalar unknowns.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .lie_core import RootDatum, build_root_datum

log = logging.getLogger(__name__)

__all__ = [
    "Grid2D",
    "ScalarField2D",
    "HoloDifferential",
    "TodaTerm",
    "TodaSystem",
    "ExponentOverflowError",
    "SingularJacobianError",
    "NewtonConvergenceError",
    "EXP_CLAMP",
    "general_system",
    "tzitzeica_system",
    "uniformizing_system",
    "sinh_gordon_system",
    "d2_signed_system",
    "b1_odd_definite_system",
    "b1_odd_split_system",
    "d23_superconformal_system",
    "make_system",
    "residual",
    "linearize",
    "solve_newton",
    "plane_wave_solution",
    "write_field_csv",
]

EXP_CLAMP = 50.0
TOPOLOGIES = ("torus", "rectangle")


class ExponentOverflowError(FloatingPointError):
    def __init__(self, node: tuple[int, int], value: float):
        super().__init__(f"exponent argument {value:.3g} exceeds clamp {EXP_CLAMP} at node {node}")
        self.node = node
        self.value = value


class SingularJacobianError(np.linalg.LinAlgError):
    def __init__(self, message: str, condition_estimate: float):
        super().__init__(f"{message} (condition estimate {condition_estimate:.3e})")
        self.condition_estimate = condition_estimate


class NewtonConvergenceError(RuntimeError):
    def __init__(self, message: str, best: "ScalarField2D"):
        super().__init__(message)
        self.best = best


# ---------------------------------------------------------------------------
# grid and fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid2D:
    """Node grid with arrays indexed ``[ix, iy]``.

    On a torus the period is ``nx * dx`` (the last node is not repeated); on
    a rectangle the first and last nodes of each axis are boundary nodes.
    """

    nx: int
    ny: int
    dx: float
    dy: float
    topology: str = "rectangle"
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self) -> None:
        if self.nx < 8 or self.ny < 8:
            raise ValueError("grid needs at least 8 points per axis")
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError("grid spacings must be positive")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}")

    @classmethod
    def from_extent(
        cls, nx: int, ny: int, lx: float, ly: float, topology: str = "rectangle", x0: float = 0.0, y0: float = 0.0
    ) -> Grid2D:
        if topology == "torus":
            return cls(nx, ny, lx / nx, ly / ny, topology, x0, y0)
        return cls(nx, ny, lx / (nx - 1), ly / (ny - 1), topology, x0, y0)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    @property
    def z(self) -> np.ndarray:
        X, Y = self.mesh()
        return X + 1j * Y

    def interior_mask(self, margin: int = 1) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        if self.topology == "torus":
            m[:] = True
        else:
            m[margin : self.nx - margin, margin : self.ny - margin] = True
        return m

    def refine(self) -> Grid2D:
        """Same extent, spacing halved."""
        if self.topology == "torus":
            return Grid2D(2 * self.nx, 2 * self.ny, self.dx / 2, self.dy / 2, "torus", self.x0, self.y0)
        return Grid2D(2 * self.nx - 1, 2 * self.ny - 1, self.dx / 2, self.dy / 2, self.topology, self.x0, self.y0)

    def to_json(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "dx": self.dx,
            "dy": self.dy,
            "topology": self.topology,
            "x0": self.x0,
            "y0": self.y0,
        }

    # -- difference operators -------------------------------------------------

    def laplacian_matrix(self, order: int = 2) -> sp.csr_matrix:
        return _laplacian_matrix(self, order)

    def laplacian(self, f: np.ndarray, order: int = 2) -> np.ndarray:
        """Discrete Laplacian over the last two axes.

        ``order=2`` is the 5-point stencil, ``order=4`` the 9-point-per-axis
        stencil.  Rows next to a rectangle boundary use one-sided stencils of
        the same order.
        """
        f = np.asarray(f)
        lead = f.shape[:-2]
        flat = f.reshape(-1, self.size).T
        out = self.laplacian_matrix(order) @ flat
        return out.T.reshape(lead + self.shape)

    def d_dx(self, f: np.ndarray, order: int = 2) -> np.ndarray:
        return _diff(f, self.dx, axis=-2, periodic=self.topology == "torus", order=order)

    def d_dy(self, f: np.ndarray, order: int = 2) -> np.ndarray:
        return _diff(f, self.dy, axis=-1, periodic=self.topology == "torus", order=order)

    def d_z(self, f: np.ndarray, order: int = 2) -> np.ndarray:
        return 0.5 * (self.d_dx(f, order) - 1j * self.d_dy(f, order))

    def d_zbar(self, f: np.ndarray, order: int = 2) -> np.ndarray:
        return 0.5 * (self.d_dx(f, order) + 1j * self.d_dy(f, order))


_D2_C4 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_D2_EDGE4 = np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0  # node 0 from nodes 0..5
_D2_NEXT4 = np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0  # node 1 from nodes 0..5


def _second_difference_1d(n: int, h: float, periodic: bool, order: int = 2) -> sp.csr_matrix:
    if order == 2:
        stencil, edge, nxt = np.array([1.0, -2.0, 1.0]), np.array([2.0, -5.0, 4.0, -1.0]), None
    elif order == 4:
        stencil, edge, nxt = _D2_C4, _D2_EDGE4, _D2_NEXT4
    else:
        raise ValueError("order must be 2 or 4")
    half = len(stencil) // 2
    offsets = list(range(-half, half + 1))
    m = sp.diags([np.full(n - abs(o), c) for o, c in zip(offsets, stencil)], offsets, shape=(n, n), format="lil")
    if periodic:
        for o, c in zip(offsets, stencil):
            for i in range(n):
                j = i + o
                if j < 0 or j >= n:
                    m[i, j % n] = c
    else:
        rows = [(0, edge)] + ([(1, nxt)] if nxt is not None else [])
        for i, st in rows:
            m[i, :] = 0.0
            m[i, : len(st)] = st
            m[n - 1 - i, :] = 0.0
            m[n - 1 - i, n - len(st) :] = st[::-1]
    return (m / (h * h)).tocsr()


@lru_cache(maxsize=32)
def _laplacian_matrix(grid: Grid2D, order: int = 2) -> sp.csr_matrix:
    periodic = grid.topology == "torus"
    dxx = _second_difference_1d(grid.nx, grid.dx, periodic, order)
    dyy = _second_difference_1d(grid.ny, grid.dy, periodic, order)
    ix, iy = sp.identity(grid.nx), sp.identity(grid.ny)
    return (sp.kron(dxx, iy) + sp.kron(ix, dyy)).tocsr()


# centered and one-sided first-derivative stencils
_C2 = (np.array([-0.5, 0.0, 0.5]), 1)
_C4 = (np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0, 2)
_FWD2 = np.array([-1.5, 2.0, -0.5])
_FWD4 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_SHIFTED4 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0  # derivative at node 1 from nodes 0..4


def _diff(f: np.ndarray, h: float, axis: int, periodic: bool, order: int) -> np.ndarray:
    f = np.moveaxis(np.asarray(f), axis, -1)
    n = f.shape[-1]
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    weights, half = _C2 if order == 2 else _C4
    out = np.zeros(f.shape, dtype=np.result_type(f, float))
    if periodic:
        for k, w in enumerate(weights):
            if w:
                out += w * np.roll(f, half - k, axis=-1)
    else:
        for k, w in enumerate(weights):
            if w:
                out[..., half : n - half] += w * f[..., k : n - 2 * half + k]
        if order == 2:
            out[..., 0] = f[..., :3] @ _FWD2
            out[..., -1] = -(f[..., -1:-4:-1] @ _FWD2)
        else:
            out[..., 0] = f[..., :5] @ _FWD4
            out[..., 1] = f[..., :5] @ _SHIFTED4
            out[..., -1] = -(f[..., -1:-6:-1] @ _FWD4)
            out[..., -2] = -(f[..., -1:-6:-1] @ _SHIFTED4)
    return np.moveaxis(out / h, -1, axis)


@dataclass
class ScalarField2D:
    grid: Grid2D
    values: np.ndarray  # shape (channels, nx, ny)
    channels: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values)
        if self.values.ndim == 2:
            self.values = self.values[None]
        if self.values.shape[1:] != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape[1:]} does not match grid {self.grid.shape}")
        if not self.channels:
            self.channels = tuple(f"w{c + 1}" for c in range(self.values.shape[0]))
        if len(self.channels) != self.values.shape[0]:
            raise ValueError("channel names do not match field")

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    def copy(self, values: np.ndarray | None = None, **meta) -> ScalarField2D:
        v = self.values.copy() if values is None else values
        return ScalarField2D(self.grid, v, self.channels, {**self.metadata, **meta})

    def max_abs(self, interior: bool = True) -> float:
        mask = self.grid.interior_mask() if interior else np.ones(self.grid.shape, bool)
        return float(np.abs(self.values[:, mask]).max())

    @classmethod
    def zeros(cls, grid: Grid2D, channels: Sequence[str]) -> ScalarField2D:
        return cls(grid, np.zeros((len(channels),) + grid.shape), tuple(channels))


@dataclass(frozen=True)
class HoloDifferential:
    """Holomorphic differential q(z) dz^degree with polynomial coefficients
    ``coeffs[k]`` of ``(z - center)^k``."""

    degree: int
    coeffs: tuple[complex, ...]
    center: complex = 0.0

    def __post_init__(self) -> None:
        if self.degree < 1:
            raise ValueError("degree must be positive")
        if not self.coeffs:
            raise ValueError("at least one coefficient is required")

    @classmethod
    def constant(cls, degree: int, value: complex) -> HoloDifferential:
        return cls(degree, (complex(value),))

    @property
    def is_constant(self) -> bool:
        return all(c == 0 for c in self.coeffs[1:])

    def __call__(self, z: np.ndarray | complex) -> np.ndarray:
        z = np.asarray(z, dtype=complex) - self.center
        out = np.zeros_like(z)
        for c in reversed(self.coeffs):
            out = out * z + c
        return out

    def samples(self, grid: Grid2D) -> np.ndarray:
        return self(grid.z)

    def cauchy_riemann_residual(self, grid: Grid2D) -> float:
        """max |d q / d zbar| over interior nodes (centered differences)."""
        s = self.samples(grid)
        r = grid.d_zbar(s)
        return float(np.abs(r[grid.interior_mask()]).max())

    def zero_nodes(self, grid: Grid2D, tol: float = 1e-12) -> list[tuple[int, int]]:
        s = self.samples(grid)
        return [tuple(map(int, ij)) for ij in np.argwhere(np.abs(s) < tol)]

    def to_json(self) -> dict:
        return {
            "degree": self.degree,
            "coeffs": [[c.real, c.imag] for c in map(complex, self.coeffs)],
            "center": [complex(self.center).real, complex(self.center).imag],
        }


# ---------------------------------------------------------------------------
# systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TodaTerm:
    coeff: complex
    q_power: tuple[int, int]  # factor q^m * conj(q)^n
    a: np.ndarray  # exponent weights: exp(2 a . w)
    b: np.ndarray  # output direction in channel space
    label: str = ""

    def factor(self, qs: np.ndarray) -> np.ndarray | complex:
        m, n = self.q_power
        f: np.ndarray | complex = self.coeff
        if m:
            f = f * qs**m
        if n:
            f = f * np.conj(qs) ** n
        return f


@dataclass(frozen=True)
class TodaSystem:
    datum: RootDatum
    family: str
    terms: tuple[TodaTerm, ...]
    channels: tuple[str, ...]
    q: HoloDifferential
    k_coeffs: tuple[complex, ...] = ()
    reality: tuple[int, ...] | None = None
    params: dict = field(default_factory=dict)
    real_valued: bool = True

    def __post_init__(self) -> None:
        if len(self.channels) != self.datum.dim:
            raise ValueError(
                f"{self.family}: {len(self.channels)} channels but datum {self.datum.diagram.label} has rank {self.datum.dim}"
            )
        for t in self.terms:
            if t.a.shape != (self.n_channels,) or t.b.shape != (self.n_channels,):
                raise ValueError("term vectors must match the channel count")
        if any(k == 0 for k in self.k_coeffs):
            raise ValueError("all k_i must be nonzero")

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def reality_consistent(self, sigma: Sequence[int]) -> bool:
        """k_{sigma(i)} == conj(k_i) for a node permutation sigma."""
        k = self.k_coeffs
        return all(np.isclose(k[sigma[i]], np.conj(k[i])) for i in range(len(k)))

    def rhs(self, omega: np.ndarray, qs: np.ndarray) -> np.ndarray:
        """sum_t factor_t exp(2 a_t . w) b_t, shape (channels, nx, ny)."""
        exps = self._exponentials(omega, qs)
        out = np.zeros(omega.shape, dtype=complex)
        for t, e in zip(self.terms, exps):
            out += t.b[:, None, None] * e
        return out

    def _exponentials(self, omega: np.ndarray, qs: np.ndarray) -> list[np.ndarray]:
        out = []
        for t in self.terms:
            arg = 2.0 * np.tensordot(t.a, omega, axes=(0, 0))
            re = np.real(arg)
            if not np.all(np.isfinite(arg)):
                bad = np.argwhere(~np.isfinite(arg))[0]
                raise ExponentOverflowError(tuple(map(int, bad)), float("nan"))
            big = np.abs(re) > EXP_CLAMP
            if big.any():
                node = np.unravel_index(np.argmax(np.abs(re)), re.shape)
                raise ExponentOverflowError(tuple(map(int, node)), float(re[node]))
            out.append(t.factor(qs) * np.exp(arg))
        return out

    def describe(self) -> dict:
        return {
            "family": self.family,
            "diagram": self.datum.diagram.label,
            "channels": list(self.channels),
            "params": {k: v for k, v in self.params.items()},
            "k_coeffs": [[complex(k).real, complex(k).imag] for k in self.k_coeffs],
            "reality": list(self.reality) if self.reality is not None else None,
            "q": self.q.to_json(),
        }


def _vec(n: int, entries: dict[int, complex]) -> np.ndarray:
    v = np.zeros(n, dtype=complex)
    for k, c in entries.items():
        v[k] += c
    return v


def _as_q(q: HoloDifferential | complex, degree: int) -> HoloDifferential:
    if isinstance(q, HoloDifferential):
        if q.degree != degree:
            raise ValueError(f"expected a differential of degree {degree}, got {q.degree}")
        return q
    return HoloDifferential.constant(degree, q)


def general_system(
    diagram: str,
    q: HoloDifferential | complex = 1.0,
    k: Sequence[complex] | None = None,
    k0_weighted: bool = True,
    q_degree: int | None = None,
) -> TodaSystem:
    """2 Omega_{z zbar} = sum_i k_i exp(2 alpha_i(Omega)) h_i for any
    supported affine diagram, with unknowns Omega = sum_j w_j h_j.

    ``k0_weighted`` multiplies k_0 by q conj(q).
    """
    datum = build_root_datum(diagram)
    dg = datum.diagram
    l = dg.rank
    kk = tuple(complex(v) for v in (k if k is not None else [1.0] * (l + 1)))
    if len(kk) != l + 1:
        raise ValueError(f"expected {l + 1} coefficients k_i")
    A = dg.cartan
    c = dg.comarks
    terms = []
    for i in range(l + 1):
        a = A[1:, i].astype(complex)  # alpha_i(h_j), j = 1..l
        if i == 0:
            b = -np.array(c[1:], dtype=complex) / c[0]
        else:
            b = _vec(l, {i - 1: 1.0})
        power = (1, 1) if (i == 0 and k0_weighted) else (0, 0)
        terms.append(TodaTerm(kk[i], power, a, b, f"alpha_{i}"))
    deg = q_degree if q_degree is not None else max(dg.marks) + 1
    qq = q if isinstance(q, HoloDifferential) else HoloDifferential.constant(deg, q)
    real = all(v.imag == 0 for v in kk)
    return TodaSystem(
        datum,
        "general",
        tuple(terms),
        tuple(f"w{j}" for j in range(1, l + 1)),
        qq,
        kk,
        None,
        {"diagram": dg.label, "k0_weighted": k0_weighted},
        real,
    )


def tzitzeica_system(q: HoloDifferential | complex = 1.0) -> TodaSystem:
    """2 w_{z zbar} = e^{2w} - q qbar e^{-4w}."""
    one = np.ones(1, dtype=complex)
    terms = (
        TodaTerm(1.0, (0, 0), one, one, "e^{2w}"),
        TodaTerm(-1.0, (1, 1), -2 * one, one, "-|q|^2 e^{-4w}"),
    )
    return TodaSystem(
        build_root_datum("A_2^(2)"), "tzitzeica", terms, ("w",), _as_q(q, 3), (1.0, 1.0), (1,), {}
    )


def uniformizing_system(q: HoloDifferential | complex = 0.0) -> TodaSystem:
    """4 v_{z zbar} = H^2 - q qbar H^{-2} with H = e^{2v}."""
    one = np.ones(1, dtype=complex)
    terms = (
        TodaTerm(0.5, (0, 0), 2 * one, one, "e^{4v}/2"),
        TodaTerm(-0.5, (1, 1), -2 * one, one, "-|q|^2 e^{-4v}/2"),
    )
    return TodaSystem(
        build_root_datum("A_1^(1)"), "uniformizing", terms, ("v",), _as_q(q, 2), (0.5, 0.5), (1,), {}
    )


def sinh_gordon_system(q: HoloDifferential | complex = 1.0) -> TodaSystem:
    """A_1^(1) with k_1 = 1 and k_0 = q qbar, h_0 = -h_1:
    2 w_{z zbar} = e^{4w} - q qbar e^{-4w}."""
    one = np.ones(1, dtype=complex)
    terms = (
        TodaTerm(1.0, (0, 0), 2 * one, one, "e^{4w}"),
        TodaTerm(-1.0, (1, 1), -2 * one, one, "-|q|^2 e^{-4w}"),
    )
    return TodaSystem(
        build_root_datum("A_1^(1)"), "sinh_gordon", terms, ("w",), _as_q(q, 2), (1.0, 1.0), (1,), {}
    )


def _chain_terms(r: int, mu: Sequence[int], n: int) -> list[TodaTerm]:
    """Terms -mu_j e^{2 w_j - 2 w_{j-1}} on channel j and +... on channel j-1."""
    terms = []
    for j in range(1, r + 1):
        a = _vec(n, {j - 1: 1.0} if j == 1 else {j - 1: 1.0, j - 2: -1.0})
        b = _vec(n, {j - 1: -1.0} if j == 1 else {j - 1: -1.0, j - 2: 1.0})
        terms.append(TodaTerm(float(mu[j - 1]), (0, 0), a, b, f"mu{j} e^(2w{j}-2w{j - 1})"))
    return terms


def _check_signs(vals: Sequence[int], count: int, name: str) -> tuple[int, ...]:
    out = tuple(int(v) for v in vals)
    if len(out) != count or any(v not in (1, -1) for v in out):
        raise ValueError(f"{name} must be {count} signs +-1")
    return out


def d2_signed_system(r: int, mu: Sequence[int], q: HoloDifferential | complex = 1.0) -> TodaSystem:
    """Even-dimensional quadric Toda system in w_1..w_r (w_0 = 0):

    2 (w_i)_{z zbar} = mu_{i+1} e^{2w_{i+1}-2w_i} - mu_i e^{2w_i-2w_{i-1}},  i < r
    2 (w_r)_{z zbar} = mu_{r+1} q qbar e^{-2w_r} - mu_r e^{2w_r-2w_{r-1}}

    ``mu`` has r + 1 entries.  q is a differential of degree r + 1.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    mu = _check_signs(mu, r + 1, "mu")
    terms = _chain_terms(r, mu, r)
    terms.append(TodaTerm(float(mu[r]), (1, 1), _vec(r, {r - 1: -1.0}), _vec(r, {r - 1: 1.0}), "mu_top |q|^2 e^(-2w_r)"))
    diagram = "A_1^(1)" if r == 1 else f"D_{r + 1}^(2)"
    return TodaSystem(
        build_root_datum(diagram),
        "d2_signed",
        tuple(terms),
        tuple(f"w{i}" for i in range(1, r + 1)),
        _as_q(q, r + 1),
        tuple(1.0 for _ in range(r + 1)),
        mu,
        {"r": r, "mu": list(mu)},
    )


def d23_superconformal_system(q: HoloDifferential | complex = 1.0) -> TodaSystem:
    """2 (w_1)_{z zbar} = -e^{2w_2-2w_1} - e^{2w_1},
    2 (w_2)_{z zbar} = q qbar e^{-2w_2} + e^{2w_2-2w_1}  (q cubic)."""
    base = d2_signed_system(2, (1, -1, 1), q)
    return replace(base, family="d23_superconformal")


def _signs_from_eps(eps_chain: Sequence[int], eps0: int) -> list[int]:
    prev, out = eps0, []
    for e in eps_chain:
        out.append(prev * e)
        prev = e
    return out


def b1_odd_definite_system(
    r: int,
    eps: int = 1,
    q: HoloDifferential | complex = 1.0,
    eps_chain: Sequence[int] | None = None,
    eps0: int = 1,
) -> TodaSystem:
    """Odd-dimensional quadric system with a definite normal plane, in
    the unknowns w_1..w_r, eta (h_i = eps_i e^{2 w_i}, h_0 = eps0):

    2 (w_r)_{z zbar} = eps/(2 h_r) (e^{2 eta} + q qbar e^{-2 eta}) - h_r/h_{r-1}
    2 eta_{z zbar}   = -eps/(2 h_r) (e^{2 eta} - q qbar e^{-2 eta})
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    chain = _check_signs(eps_chain if eps_chain is not None else [1] * r, r, "eps_chain")
    eps = _check_signs([eps], 1, "eps")[0]
    mu = _signs_from_eps(chain, eps0)
    n = r + 1
    terms = _chain_terms(r, mu, n)
    c = eps * chain[-1] / 2.0
    ir, ie = r - 1, r
    terms.append(TodaTerm(c, (0, 0), _vec(n, {ir: -1.0, ie: 1.0}), _vec(n, {ir: 1.0, ie: -1.0}), "e^(2eta)/2h_r"))
    terms.append(TodaTerm(c, (1, 1), _vec(n, {ir: -1.0, ie: -1.0}), _vec(n, {ir: 1.0, ie: 1.0}), "|q|^2 e^(-2eta)/2h_r"))
    return TodaSystem(
        build_root_datum(f"B_{r + 1}^(1)"),
        "b1_odd_definite",
        tuple(terms),
        tuple(f"w{i}" for i in range(1, r + 1)) + ("eta",),
        _as_q(q, 2 * r + 2),
        tuple(1.0 for _ in range(r + 2)),
        tuple(mu) + (eps * chain[-1],),
        {"r": r, "eps": eps, "eps_chain": list(chain), "eps0": eps0},
    )


def b1_odd_split_system(
    r: int,
    q: HoloDifferential | complex = 1.0,
    eps_chain: Sequence[int] | None = None,
    eps0: int = 1,
) -> TodaSystem:
    """Odd-dimensional quadric system with a Lorentzian normal plane:

    2 (w_r)_{z zbar} = (q e^{i eta} + qbar e^{-i eta}) / (2 h_r) - h_r/h_{r-1}
    2 eta_{z zbar}   = -(q e^{i eta} - qbar e^{-i eta}) / (2 i h_r)
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    chain = _check_signs(eps_chain if eps_chain is not None else [1] * r, r, "eps_chain")
    mu = _signs_from_eps(chain, eps0)
    n = r + 1
    terms = _chain_terms(r, mu, n)
    c = chain[-1] / 2.0
    ir, ie = r - 1, r
    terms.append(TodaTerm(c, (1, 0), _vec(n, {ir: -1.0, ie: 0.5j}), _vec(n, {ir: 1.0, ie: 1j}), "q e^(i eta)/2h_r"))
    terms.append(TodaTerm(c, (0, 1), _vec(n, {ir: -1.0, ie: -0.5j}), _vec(n, {ir: 1.0, ie: -1j}), "qbar e^(-i eta)/2h_r"))
    return TodaSystem(
        build_root_datum(f"B_{r + 1}^(1)"),
        "b1_odd_split",
        tuple(terms),
        tuple(f"w{i}" for i in range(1, r + 1)) + ("eta",),
        _as_q(q, 2 * r + 2),
        tuple(1.0 for _ in range(r + 2)),
        tuple(mu),
        {"r": r, "eps_chain": list(chain), "eps0": eps0},
    )


def make_system(family: str, q: HoloDifferential | complex = 1.0, **params) -> TodaSystem:
    """Dispatch on a family name (as used in configuration files)."""
    builders = {
        "general": lambda: general_system(params.pop("diagram"), q, **params),
        "tzitzeica": lambda: tzitzeica_system(q),
        "uniformizing": lambda: uniformizing_system(q),
        "sinh_gordon": lambda: sinh_gordon_system(q),
        "d2_signed": lambda: d2_signed_system(params.pop("r"), params.pop("mu"), q),
        "b1_odd_definite": lambda: b1_odd_definite_system(params.pop("r"), q=q, **params),
        "b1_odd_split": lambda: b1_odd_split_system(params.pop("r"), q=q, **params),
        "d23_superconformal": lambda: d23_superconformal_system(q),
    }
    if family not in builders:
        raise ValueError(f"unknown Toda family {family!r}")
    try:
        system = builders[family]()
    except KeyError as exc:
        raise ValueError(f"family {family!r} requires parameter {exc.args[0]!r}") from None
    if family in ("tzitzeica", "uniformizing", "sinh_gordon", "d23_superconformal") and params:
        raise ValueError(f"family {family!r} takes no parameters, got {sorted(params)}")
    return system


# ---------------------------------------------------------------------------
# residual, linearization, Newton
# ---------------------------------------------------------------------------


def _check(system: TodaSystem, omega: ScalarField2D) -> None:
    if omega.n_channels != system.n_channels:
        raise ValueError(f"field has {omega.n_channels} channels, system {system.family} needs {system.n_channels}")


def _finish(system: TodaSystem, omega: np.ndarray, values: np.ndarray) -> np.ndarray:
    if system.real_valued and np.isrealobj(omega):
        return values.real
    return values


def residual(system: TodaSystem, omega: ScalarField2D, order: int = 2) -> ScalarField2D:
    """r = 2 w_{z zbar} - sum_t factor_t exp(2 a_t . w) b_t per channel."""
    _check(system, omega)
    grid = omega.grid
    w = omega.values
    qs = system.q.samples(grid)
    res = 0.5 * grid.laplacian(w, order) - system.rhs(w, qs)
    return ScalarField2D(grid, _finish(system, w, res), omega.channels, {"kind": "residual"})


def linearize(system: TodaSystem, omega: ScalarField2D, order: int = 2) -> sp.csr_matrix:
    """Sparse Jacobian of the residual, unknowns ordered channel-major."""
    _check(system, omega)
    grid = omega.grid
    w = omega.values
    qs = system.q.samples(grid)
    C = system.n_channels
    lap = 0.5 * grid.laplacian_matrix(order)
    exps = system._exponentials(w, qs)
    blocks: list[list[sp.spmatrix]] = []
    real = system.real_valued and np.isrealobj(w)
    for c in range(C):
        row = []
        for d in range(C):
            coef = np.zeros(grid.shape, dtype=complex)
            for t, e in zip(system.terms, exps):
                if t.b[c] != 0 and t.a[d] != 0:
                    coef += 2.0 * t.a[d] * t.b[c] * e
            diag = coef.ravel()
            if real:
                diag = diag.real
            block = sp.diags(-diag)
            if c == d:
                block = block + lap
            row.append(block)
        blocks.append(row)
    return sp.bmat(blocks, format="csr")


def _unknown_mask(grid: Grid2D) -> np.ndarray:
    return grid.interior_mask().ravel()


def _condition_estimate(J: sp.spmatrix) -> float:
    if J.shape[0] <= 3000:
        return float(np.linalg.cond(J.toarray()))
    return float("inf")


def solve_newton(
    system: TodaSystem,
    init: ScalarField2D,
    tol: float = 1e-10,
    max_iters: int = 50,
    armijo: float = 1e-4,
    min_step: float = 2.0**-12,
    strict: bool = False,
    order: int = 2,
) -> ScalarField2D:
    """Damped Newton iteration with Armijo backtracking on ||r||^2.

    On a rectangle the boundary values of ``init`` are held fixed and the
    residual is measured on interior nodes only.  The returned field carries
    ``metadata['history']`` (residual max-norm per iterate) and
    ``metadata['converged']``.  With ``strict=True`` a failure raises
    :class:`NewtonConvergenceError` carrying the best iterate.
    """
    _check(system, init)
    if not np.all(np.isfinite(init.values)):
        raise ValueError("initial guess must be finite")
    grid = init.grid
    C = system.n_channels
    free = np.tile(_unknown_mask(grid), C)
    w = init.values.astype(float if system.real_valued and np.isrealobj(init.values) else complex).copy()

    def res_vec(vals: np.ndarray) -> np.ndarray:
        r = residual(system, ScalarField2D(grid, vals, init.channels), order).values
        return r.reshape(-1)[free]

    r = res_vec(w)
    history = [float(np.abs(r).max())]
    steps: list[float] = []
    best = (history[0], w.copy())
    zeros = system.q.zero_nodes(grid)
    converged = history[0] < tol
    diagnostic = ""
    it = 0
    while not converged and it < max_iters:
        it += 1
        J = linearize(system, ScalarField2D(grid, w, init.channels), order)[free][:, free].tocsc()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                delta = spla.splu(J).solve(-r)
        except (RuntimeError, spla.MatrixRankWarning):
            raise SingularJacobianError("singular linearization", _condition_estimate(J)) from None
        phi0 = float(np.vdot(r, r).real)
        t = 1.0
        while True:
            trial = w.copy()
            trial.reshape(-1)[free] += t * delta
            try:
                r_new = res_vec(trial)
                phi1 = float(np.vdot(r_new, r_new).real)
                ok = phi1 <= (1.0 - 2.0 * armijo * t) * phi0
            except ExponentOverflowError:
                ok = False
            if ok or t <= min_step:
                break
            t *= 0.5
        if not ok:
            diagnostic = f"line search stalled at step {t:.2e} in iteration {it}"
            break
        w, r = trial, r_new
        steps.append(t)
        history.append(float(np.abs(r).max()))
        if history[-1] < best[0]:
            best = (history[-1], w.copy())
        converged = history[-1] < tol
        log.debug("newton %d: |r| = %.3e, step %.3g", it, history[-1], t)
    if not converged and not diagnostic:
        diagnostic = f"no convergence after {max_iters} iterations"
    meta = {
        "converged": converged,
        "iterations": len(steps),
        "history": history,
        "steps": steps,
        "tol": tol,
        "laplacian_order": order,
        "family": system.family,
        "q_zero_nodes": zeros,
    }
    if diagnostic:
        meta["diagnostic"] = diagnostic
    values = w if converged else best[1]
    out = ScalarField2D(grid, values, init.channels, {**init.metadata, **meta})
    if strict and not converged:
        raise NewtonConvergenceError(diagnostic, out)
    return out


# ---------------------------------------------------------------------------
# one-dimensional reductions and IO
# ---------------------------------------------------------------------------


def plane_wave_solution(
    system: TodaSystem,
    grid: Grid2D,
    beta: float = 0.0,
    w0: Sequence[float] | None = None,
    dw0: Sequence[float] | None = None,
    t0: float = 0.0,
    rtol: float = 1e-13,
) -> ScalarField2D:
    """Exact solution depending on t = x cos(beta) + y sin(beta) only.

    For constant q the system reduces to the ODE (1/2) w'' = rhs(w), which
    is integrated from t0 in both directions with a high-order adaptive
    scheme and sampled on the grid.  Useful as smooth Dirichlet data.
    """
    if not system.q.is_constant:
        raise ValueError("plane-wave reduction needs a constant differential")
    C = system.n_channels
    w0 = np.zeros(C) if w0 is None else np.asarray(w0, float)
    dw0 = np.zeros(C) if dw0 is None else np.asarray(dw0, float)
    qv = np.array([[system.q.coeffs[0]]])

    def f(_t, y):
        w = y[:C].reshape(C, 1, 1)
        acc = 2.0 * system.rhs(w, qv).real.reshape(C)
        return np.concatenate([y[C:], acc])

    X, Y = grid.mesh()
    T = X * np.cos(beta) + Y * np.sin(beta)
    ts = np.unique(T.ravel())
    out = np.empty((C, ts.size))
    y0 = np.concatenate([w0, dw0])
    up = ts >= t0
    for mask, sign in ((up, 1), (~up, -1)):
        pts = ts[mask]
        if pts.size == 0:
            continue
        end = pts.max() if sign > 0 else pts.min()
        if end == t0:
            out[:, mask] = w0[:, None]
            continue
        evals = np.sort(pts)[::sign]
        sol = solve_ivp(f, (t0, end), y0, method="DOP853", t_eval=evals, rtol=rtol, atol=rtol)
        if not sol.success:
            raise RuntimeError(f"plane-wave integration failed: {sol.message}")
        order = np.searchsorted(ts, evals)
        out[:, order] = sol.y[:C]
    idx = np.searchsorted(ts, T)
    vals = out[:, idx]
    return ScalarField2D(grid, vals, system.channels, {"kind": "plane_wave", "beta": beta})


def write_field_csv(path, field_: ScalarField2D, sidecar: dict | None = None) -> None:
    """CSV with columns x, y, channel values (real and imaginary parts for
    complex fields) and an optional JSON sidecar at ``path + '.json'``."""
    X, Y = field_.grid.mesh()
    complex_field = np.iscomplexobj(field_.values)
    header = ["x", "y"]
    for name in field_.channels:
        header += [f"{name}_re", f"{name}_im"] if complex_field else [name]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for ix in range(field_.grid.nx):
            for iy in range(field_.grid.ny):
                row = [repr(float(X[ix, iy])), repr(float(Y[ix, iy]))]
                for c in range(field_.n_channels):
                    v = field_.values[c, ix, iy]
                    row += [repr(float(v.real)), repr(float(v.imag))] if complex_field else [repr(float(v))]
                wr.writerow(row)
    if sidecar is not None:
        with open(f"{path}.json", "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")
