"""Semi-flat G2 structures from maps of a 3-manifold into the 2-forms of R^4.

A map u from a domain in R^3 into Lambda^2 R^4 (six components u_ab) with
non-degenerate pulled-back wedge pairing defines

    h_ij = pair(d_i u, d_j u) / (2 tau),   phi = dvol_h + du,   psi = *phi

on M x T^4.  phi is always closed; psi is closed exactly when u is harmonic
for h.  All the seven-dimensional exterior calculus reduces to identities
on the base, which are evaluated here by finite differences.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .develop import ImmersionSample
from .toda import HoloDifferential, ScalarField2D, TodaSystem, TodaTerm, _diff, d23_superconformal_system, residual
from .lie_core import build_root_datum

__all__ = [
    "PAIRS",
    "PAIRING",
    "SELF_DUAL",
    "ANTI_SELF_DUAL",
    "DegenerateMetricError",
    "Grid3D",
    "Wedge2Vector",
    "ImmersionField3D",
    "G2StructureField",
    "wedge_pairing",
    "isometry_to_wedge2",
    "linear_field",
    "induced_metric",
    "tension_field",
    "assemble_g2_forms",
    "seven_dim_metric",
    "cone_extend",
    "cone_metric_defect",
    "cone_tension_components",
    "monge_ampere_check",
    "elliptic_affine_system",
    "elliptic_to_d23",
    "write_u_csv",
    "read_u_csv",
]

# components u_ab, 1 <= a < b <= 4, in this order
PAIRS = ((1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4))


def _pairing_matrix() -> np.ndarray:
    """P with u ^ v = (u^T P v) dx^1234."""
    P = np.zeros((6, 6))
    for i, (a, b) in enumerate(PAIRS):
        for j, (c, d) in enumerate(PAIRS):
            idx = (a, b, c, d)
            if len(set(idx)) == 4:
                perm = [sorted(idx).index(v) for v in idx]
                sign = 1
                for x in range(4):
                    for y in range(x + 1, 4):
                        if perm[x] > perm[y]:
                            sign = -sign
                P[i, j] = sign
    return P


PAIRING = _pairing_matrix()
SELF_DUAL = np.array([[1.0, 0, 0, 0, 0, 1], [0, 1, 0, 0, -1, 0], [0, 0, -1, -1, 0, 0]])
ANTI_SELF_DUAL = np.array([[1.0, 0, 0, 0, 0, -1], [0, 1, 0, 0, 1, 0], [0, 0, -1, 1, 0, 0]])


class DegenerateMetricError(ValueError):
    def __init__(self, message: str, nodes: list[tuple[int, ...]]):
        super().__init__(message)
        self.nodes = nodes


@dataclass(frozen=True)
class Wedge2Vector:
    components: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.components) != 6:
            raise ValueError("a 2-form on R^4 has 6 components")

    @property
    def array(self) -> np.ndarray:
        return np.array(self.components, dtype=float)

    def pairing(self, other: Wedge2Vector) -> float:
        return float(self.array @ PAIRING @ other.array)

    def matrix(self) -> np.ndarray:
        """Antisymmetric 4x4 coefficient matrix."""
        m = np.zeros((4, 4))
        for (a, b), c in zip(PAIRS, self.components):
            m[a - 1, b - 1] += c
            m[b - 1, a - 1] -= c
        return m


def wedge_pairing(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """dx^1234 coefficient of u ^ v over the last axis."""
    return np.einsum("...a,ab,...b->...", u, PAIRING, v)


def isometry_to_wedge2(gram: np.ndarray) -> np.ndarray:
    """J (6 x 6) with pair(J x, J y) = 2 x^T gram y for a (3, 3) Gram matrix.

    Positive directions go to the self-dual basis and negative ones to the
    anti-self-dual basis.
    """
    ev, V = np.linalg.eigh(gram)
    if np.sum(ev > 0) != 3 or np.sum(ev < 0) != 3:
        raise ValueError("gram matrix must have signature (3, 3)")
    order = np.argsort(-ev)
    T = V[:, order] / np.sqrt(np.abs(ev[order]))  # T^T gram T = diag(1,1,1,-1,-1,-1)
    W = np.vstack([SELF_DUAL, ANTI_SELF_DUAL]).T  # columns are the six basis 2-forms
    return W @ np.linalg.inv(T)


# ---------------------------------------------------------------------------
# grids and fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid3D:
    shape: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if any(n < 5 for n in self.shape):
            raise ValueError("each axis needs at least 5 nodes")
        if any(h <= 0 for h in self.spacing):
            raise ValueError("spacings must be positive")

    @classmethod
    def box(cls, shape: Sequence[int], lower: Sequence[float], upper: Sequence[float]) -> Grid3D:
        sp = tuple((hi - lo) / (n - 1) for n, lo, hi in zip(shape, lower, upper))
        return cls(tuple(int(n) for n in shape), sp, tuple(float(v) for v in lower))

    def axes(self) -> list[np.ndarray]:
        return [o + h * np.arange(n) for n, h, o in zip(self.shape, self.spacing, self.origin)]

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def derivative(self, f: np.ndarray, axis: int, order: int = 2) -> np.ndarray:
        """d/dw^axis of f whose leading three axes are the grid."""
        return _diff(f, self.spacing[axis], axis=axis, periodic=False, order=order)

    def interior_mask(self, margin: int = 1) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[tuple(slice(margin, n - margin) for n in self.shape)] = True
        return m

    def refine(self) -> Grid3D:
        return Grid3D(tuple(2 * n - 1 for n in self.shape), tuple(h / 2 for h in self.spacing), self.origin)

    def to_json(self) -> dict:
        return {"shape": list(self.shape), "spacing": list(self.spacing), "origin": list(self.origin)}


@dataclass
class ImmersionField3D:
    grid: Grid3D
    u: np.ndarray  # (n1, n2, n3, 6)
    tau: float = 1.0
    variant: str = "compact"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.u.shape != self.grid.shape + (6,):
            raise ValueError(f"u must have shape {self.grid.shape + (6,)}")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.variant not in ("compact", "split"):
            raise ValueError("variant must be 'compact' or 'split'")

    def gradient(self, order: int = 2) -> np.ndarray:
        """d_i u, shape (3, n1, n2, n3, 6)."""
        return np.array([self.grid.derivative(self.u, i, order) for i in range(3)])


@dataclass
class G2StructureField:
    grid: Grid3D
    h: np.ndarray  # (n1, n2, n3, 3, 3)
    dvol: np.ndarray
    theta: np.ndarray  # (3, n1, n2, n3, 6)
    tau: float
    variant: str
    dphi: np.ndarray  # max over components of the antisymmetric part of d_j theta_i
    dpsi: np.ndarray  # (n1, n2, n3, 6) coefficients of dvol_M ^ dx^ab in d psi
    margin: int

    def residuals(self) -> dict[str, float]:
        mask = self.grid.interior_mask(self.margin)
        return {
            "dphi": float(np.abs(self.dphi[mask]).max()),
            "dpsi": float(np.abs(self.dpsi[mask]).max()),
        }

    def phi_node(self, idx: tuple[int, int, int]) -> np.ndarray:
        """phi as an antisymmetric 7-tensor at a node: dw^1..dw^3, dx^1..dx^4."""
        sign = 1.0 if self.variant == "compact" else -1.0
        t = np.zeros((7, 7, 7))
        _add_form(t, (0, 1, 2), self.dvol[idx])
        for i in range(3):
            for (a, b), c in zip(PAIRS, self.theta[(i,) + idx]):
                if c:
                    _add_form(t, (i, 2 + a, 2 + b), sign * c)
        return t

    def psi_fiber_coefficient(self) -> float:
        """dx^1234 coefficient of psi: the fibre volume tau."""
        return float(self.tau)


def _perm_sign(p: Sequence[int]) -> int:
    s = 1
    p = list(p)
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                s = -s
    return s


def _add_form(t: np.ndarray, idx: tuple[int, ...], c: float) -> None:
    for p in itertools.permutations(range(len(idx))):
        t[tuple(idx[k] for k in p)] += _perm_sign(p) * c


@lru_cache(maxsize=1)
def _levi_civita7() -> np.ndarray:
    eps = np.zeros((7,) * 7, dtype=np.int8)
    for p in itertools.permutations(range(7)):
        eps[p] = _perm_sign(p)
    return eps


def seven_dim_metric(phi: np.ndarray) -> np.ndarray:
    """Metric of a G2 (or split G2) 3-form from B(A, B) vol = (1/6) i_A phi ^ i_B phi ^ phi.

    B is rescaled by |det B|^{-1/9}.
    """
    B = np.einsum("Aab,Bcd,efg,abcdefg->AB", phi, phi, phi, _levi_civita7(), optimize=True) / (6.0 * 2 * 2 * 6)
    det = np.linalg.det(B)
    if abs(det) < 1e-300:
        raise DegenerateMetricError("3-form is not stable", [])
    return B / abs(det) ** (1.0 / 9.0)


def linear_field(grid: Grid3D, basis: np.ndarray = SELF_DUAL, offset: np.ndarray | None = None) -> np.ndarray:
    """u = sum_i w^i basis_i (+ offset)."""
    W = np.stack(grid.mesh(), axis=-1)
    u = W @ np.asarray(basis)
    return u if offset is None else u + offset


# ---------------------------------------------------------------------------
# metric, tension, forms
# ---------------------------------------------------------------------------


def _classify(h: np.ndarray, mask: np.ndarray, variant: str, tol: float) -> tuple[tuple[int, int], list[tuple[int, ...]]]:
    ev = np.linalg.eigvalsh(h)
    scale = max(float(np.abs(ev[mask]).max()), 1e-300)
    degenerate = np.abs(ev).min(axis=-1) <= tol * scale
    bad = [tuple(int(v) for v in n) for n in np.argwhere(degenerate & mask)]
    pos = int(np.median(np.sum(ev > 0, axis=-1)[mask]))
    return (pos, 3 - pos), bad


def induced_metric(field_: ImmersionField3D, order: int = 2, tol: float = 1e-10, margin: int = 0) -> tuple[np.ndarray, tuple[int, int]]:
    """h_ij = pair(d_i u, d_j u) / (2 tau); returns (h, signature).

    Raises :class:`DegenerateMetricError` listing the degenerate nodes.
    """
    du = field_.gradient(order)
    h = np.einsum("i...a,ab,j...b->...ij", du, PAIRING, du) / (2.0 * field_.tau)
    mask = field_.grid.interior_mask(margin) if margin else np.ones(field_.grid.shape, bool)
    sig, bad = _classify(h, mask, field_.variant, tol)
    if bad:
        raise DegenerateMetricError(f"induced metric degenerate at {len(bad)} nodes (first {bad[0]})", bad)
    return h, sig


def _christoffel(grid: Grid3D, h: np.ndarray, hinv: np.ndarray, order: int) -> np.ndarray:
    """Gamma^k_ij, shape (..., k, i, j)."""
    dh = np.array([grid.derivative(h, m, order) for m in range(3)])  # (m, ..., i, j)
    dh = np.moveaxis(dh, 0, -1)  # (..., i, j, m) = d_m h_ij
    # Gamma_{m i j} (lowered) = 1/2 (d_i h_jm + d_j h_im - d_m h_ij)
    low = 0.5 * (
        np.einsum("...jmi->...mij", dh) + np.einsum("...imj->...mij", dh) - np.einsum("...ijm->...mij", dh)
    )
    return np.einsum("...km,...mij->...kij", hinv, low)


def tension_field(field_: ImmersionField3D, order: int = 2) -> np.ndarray:
    """h^{ij} (d_ij u - Gamma^k_ij d_k u) in a linear target, shape (..., 6)."""
    grid = field_.grid
    h, _ = induced_metric(field_, order)
    hinv = np.linalg.inv(h)
    du = field_.gradient(order)
    d2 = np.array([[grid.derivative(du[j], i, order) for j in range(3)] for i in range(3)])
    d2 = 0.5 * (d2 + np.swapaxes(d2, 0, 1))
    gam = _christoffel(grid, h, hinv, order)
    hess = d2 - np.einsum("...kij,k...a->ij...a", gam, du)
    return np.einsum("...ij,ij...a->...a", hinv, hess)


def assemble_g2_forms(field_: ImmersionField3D, order: int = 2, margin: int | None = None) -> G2StructureField:
    """Coefficients of phi = dvol_h +- du and psi = tau dx^1234 + *_3 dw^i ^ theta_i.

    d phi reduces to the antisymmetric part of d_j theta_i; the coefficient
    of dvol_M ^ dx^ab in d psi is d_j(sqrt|h| h^{ij} d_i u_ab) / sqrt|h|,
    computed in divergence form from the assembled coefficients.
    """
    grid = field_.grid
    h, sig = induced_metric(field_, order)
    if field_.variant == "compact" and sig != (3, 0):
        raise DegenerateMetricError(f"compact variant needs a definite metric, got signature {sig}", [])
    if field_.variant == "split" and sig not in ((3, 0), (1, 2)):
        raise DegenerateMetricError(f"split variant needs signature (3,0) or (1,2), got {sig}", [])
    hinv = np.linalg.inv(h)
    sq = np.sqrt(np.abs(np.linalg.det(h)))
    theta = field_.gradient(order)
    dtheta = np.array([[grid.derivative(theta[i], j, order) for j in range(3)] for i in range(3)])
    dphi = np.abs(dtheta - np.swapaxes(dtheta, 0, 1)).max(axis=(0, 1, -1))
    # *_3 dw^i = sqrt|h| h^{ij} i_{d_j} dw^123; the flux through each face is F^j
    flux = np.einsum("...,...ij,i...a->j...a", sq, hinv, theta)
    div = sum(grid.derivative(flux[j], j, order) for j in range(3))
    dpsi = div / sq[..., None]
    m = 2 * (order // 2 + 1) if margin is None else margin
    return G2StructureField(grid, h, sq, theta, field_.tau, field_.variant, dphi, dpsi, m)


# ---------------------------------------------------------------------------
# cones over surfaces
# ---------------------------------------------------------------------------


def cone_extend(
    surface: ImmersionSample,
    r_values: Sequence[float] | np.ndarray,
    variant: str = "compact",
    tau: float = 1.0,
    tol: float = 1e-6,
) -> ImmersionField3D:
    """u(x, y, r) = r J sigma(x, y) for a surface sigma in a quadric of R^{3,3}.

    J is an isometry onto Lambda^2 R^4 with pair = 2 <, >.  The compact
    variant needs <sigma, sigma> = 1, the split variant <sigma, sigma> = -1.
    """
    if surface.gram is None:
        raise ValueError("surface carries no metric")
    want = 1.0 if variant == "compact" else -1.0
    norms = surface.pair(surface.points, surface.points)
    if np.abs(norms - want).max() > tol:
        raise ValueError(f"{variant} variant needs a surface in the quadric <x,x> = {want:+.0f}")
    r = np.asarray(r_values, dtype=float)
    if r.ndim != 1 or np.any(np.diff(r) <= 0) or r[0] <= 0:
        raise ValueError("r_values must be increasing and positive")
    dr = np.diff(r)
    if not np.allclose(dr, dr[0]):
        raise ValueError("r_values must be equally spaced")
    J = isometry_to_wedge2(surface.gram)
    sig = surface.points @ J.T  # (nx, ny, 6)
    u = sig[:, :, None, :] * r[None, None, :, None]
    g2 = surface.grid
    grid = Grid3D((g2.nx, g2.ny, len(r)), (g2.dx, g2.dy, float(dr[0])), (g2.x0, g2.y0, float(r[0])))
    f = ImmersionField3D(grid, u, tau, variant, {"cone": True, "h0": want})
    # a constant sigma gives a rank-one metric
    pulled = np.einsum("i...a,ab,j...b->...ij", f.gradient(2), PAIRING, f.gradient(2))
    if np.abs(np.linalg.det(pulled)).max() <= 1e-12 * max(np.abs(pulled).max(), 1.0) ** 3:
        raise DegenerateMetricError("cone metric is degenerate (constant section?)", [])
    return f


def cone_metric_defect(surface: ImmersionSample, cone: ImmersionField3D, order: int = 4) -> float:
    """max |h - (h0 dr^2 + r^2 g_Sigma)/tau| with g_Sigma the surface metric."""
    h, _ = induced_metric(cone, order=order)
    fx = surface.derivative("x", order=order)
    fy = surface.derivative("y", order=order)
    gs = np.empty(surface.points.shape[:2] + (2, 2))
    gs[..., 0, 0] = surface.pair(fx, fx)
    gs[..., 0, 1] = gs[..., 1, 0] = surface.pair(fx, fy)
    gs[..., 1, 1] = surface.pair(fy, fy)
    _, _, rr = cone.grid.mesh()
    want = np.zeros(h.shape)
    want[..., :2, :2] = rr[..., None, None] ** 2 * gs[:, :, None]
    want[..., 2, 2] = cone.metadata.get("h0", 1.0)
    want /= cone.tau
    mask = cone.grid.interior_mask(order // 2 + 1)
    return float(np.abs(h - want)[mask].max())


def cone_tension_components(cone: ImmersionField3D, order: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Radial and tangential parts of the tension of a cone u = r s.

    The linear-target tension T splits as tau0 s + r tau_gamma with
    tau_gamma tangent to the quadric at s.  In cone coordinates tau_gamma
    are the components along the directions of the link, so r^2 tau_gamma
    and r tau0 depend only on the link point.  Returns (tau0, tau_gamma)
    of shapes (n1, n2, n3) and (n1, n2, n3, 6).
    """
    if not cone.metadata.get("cone"):
        raise ValueError("field was not produced by cone_extend")
    T = tension_field(cone, order)
    _, _, rr = cone.grid.mesh()
    link = cone.u / rr[..., None]
    a = wedge_pairing(T, link) / wedge_pairing(link, link)
    perp = T - a[..., None] * link
    return a, perp / rr[..., None]


# ---------------------------------------------------------------------------
# Monge-Ampere reduction
# ---------------------------------------------------------------------------


def monge_ampere_check(potential: np.ndarray, grid: Grid3D, order: int = 4, margin: int | None = None) -> dict:
    """Residuals d_a det(Hess) and psi^{ij} phi_{aij} for sampled potentials.

    psi^{ij} is the inverse Hessian (the Hessian of the Legendre dual).  By
    Jacobi's formula d_a det = det psi^{ij} phi_{aij}; the ratio of the two
    residuals is returned against det.
    """
    phi = np.asarray(potential, dtype=float)
    if phi.shape != grid.shape:
        raise ValueError("potential must be sampled on the grid")
    first = [grid.derivative(phi, i, order) for i in range(3)]
    H = np.empty(grid.shape + (3, 3))
    for i in range(3):
        for j in range(i, 3):
            v = 0.5 * (grid.derivative(first[i], j, order) + grid.derivative(first[j], i, order))
            H[..., i, j] = H[..., j, i] = v
    m = 2 * (order // 2 + 1) if margin is None else margin
    mask = grid.interior_mask(m)
    if not mask.any():
        raise ValueError(f"grid {grid.shape} has no nodes beyond the stencil margin {m}")
    ev = np.linalg.eigvalsh(H[mask])
    if np.any(ev <= 0):
        raise ValueError("Hessian of the potential must be positive definite")
    det = np.linalg.det(H)
    psi = np.linalg.inv(H)
    ddet = np.array([grid.derivative(det, a, order) for a in range(3)])  # (a, ...)
    third = np.array([grid.derivative(H, a, order) for a in range(3)])  # (a, ..., i, j)
    contraction = np.einsum("...ij,a...ij->a...", psi, third)
    A = ddet[:, mask]
    Bc = contraction[:, mask]
    predicted = det[mask] * Bc
    scale = max(float(np.abs(A).max()), 1e-300)
    mismatch = float(np.abs(A - predicted).max())
    return {
        "det_derivative": float(np.abs(A).max()),
        "contraction": float(np.abs(Bc).max()),
        "jacobi_mismatch": mismatch,
        "jacobi_relative": mismatch / scale if scale > 1e-300 else 0.0,
        "det_range": [float(det[mask].min()), float(det[mask].max())],
    }


# ---------------------------------------------------------------------------
# elliptic affine sphere reduction
# ---------------------------------------------------------------------------


def elliptic_affine_system(q: HoloDifferential | complex = 1.0) -> TodaSystem:
    """2 w_{z zbar} = -q qbar e^{-4w} - e^{2w} (elliptic affine spheres)."""
    qq = q if isinstance(q, HoloDifferential) else HoloDifferential.constant(3, q)
    one = np.ones(1, dtype=complex)
    terms = (
        TodaTerm(-1.0, (0, 0), one, one, "-e^(2w)"),
        TodaTerm(-1.0, (1, 1), -2.0 * one, one, "-|q|^2 e^(-4w)"),
    )
    return TodaSystem(build_root_datum("A_2^(2)"), "elliptic_affine", terms, ("w",), qq, (1.0, 1.0), None, {})


def elliptic_to_d23(w1: ScalarField2D, q: HoloDifferential) -> ScalarField2D:
    """(w1, w2) with e^{2 w2} = q qbar e^{-2 w1}, i.e. H2 = q qbar / H1."""
    qs = q.samples(w1.grid)
    if np.any(np.abs(qs) < 1e-12):
        raise ValueError("the reduction needs q without zeros on the grid")
    w = np.real(w1.values[0])
    w2 = np.log(np.abs(qs)) - w
    return ScalarField2D(w1.grid, np.array([w, w2]), ("w1", "w2"), {"kind": "elliptic_reduction"})


def reduction_residuals(w1: ScalarField2D, q: HoloDifferential, order: int = 2) -> dict[str, float]:
    """Residual of the elliptic equation and of the d23 system on the image."""
    src = residual(elliptic_affine_system(q), w1, order).max_abs()
    img = residual(d23_superconformal_system(q), elliptic_to_d23(w1, q), order).max_abs()
    return {"elliptic": src, "d23": img}


# ---------------------------------------------------------------------------
# IO
# ---------------------------------------------------------------------------


def write_u_csv(path: str | Path, field_: ImmersionField3D) -> None:
    """CSV of (i, j, k, u_12 .. u_34) with a JSON header line."""
    path = Path(path)
    header = {"grid": field_.grid.to_json(), "tau": field_.tau, "variant": field_.variant}
    with path.open("w", newline="") as fh:
        fh.write("# " + json.dumps(header) + "\n")
        w = csv.writer(fh)
        w.writerow(["i", "j", "k"] + [f"u{a}{b}" for a, b in PAIRS])
        for idx in np.ndindex(*field_.grid.shape):
            w.writerow(list(idx) + [f"{v:.17g}" for v in field_.u[idx]])


def read_u_csv(path: str | Path) -> ImmersionField3D:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError("missing JSON header line")
        header = json.loads(first[2:])
        g = header["grid"]
        grid = Grid3D(tuple(g["shape"]), tuple(g["spacing"]), tuple(g["origin"]))
        reader = csv.reader(fh)
        next(reader)
        u = np.zeros(grid.shape + (6,))
        for row in reader:
            i, j, k = (int(v) for v in row[:3])
            u[i, j, k] = [float(v) for v in row[3:]]
    return ImmersionField3D(grid, u, float(header["tau"]), header["variant"])

