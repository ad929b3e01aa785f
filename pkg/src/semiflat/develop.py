"""Developing maps of flat connections.

A flat connection ``d + A`` on a grid patch is trivialised by transporting a
frame along a spanning tree.  With ``P`` solving ``dP = P A`` along paths and
``P = I`` at the root, the vector ``P(z) v`` expresses a vector ``v`` of the
local frame at ``z`` in the root frame; a section that is real for the
connection's real structure then develops to a map into a real vector space.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import octonion
from .gauge import ConnectionField
from .toda import Grid2D

log = logging.getLogger(__name__)

__all__ = [
    "PathError",
    "FrameBlowupError",
    "NonFlatConnectionError",
    "HarmonicSequenceError",
    "FramePath",
    "ImmersionSample",
    "HarmonicSequence",
    "parallel_transport",
    "develop_frames",
    "loop_holonomy",
    "holonomy_report",
    "real_frame",
    "develop_immersion",
    "harmonic_sequence",
    "affine_sphere_check",
    "g2_cross_defect",
    "uniformizing_section",
    "uniformizing_section_defect",
    "verify_convex_foliated",
    "write_points_csv",
    "write_obj",
]

BLOWUP_NORM = 1e8
SUBSTEPS = 4


class PathError(ValueError):
    """A path leaves the grid or joins non-adjacent nodes."""


class FrameBlowupError(FloatingPointError):
    def __init__(self, node: tuple[int, int], norm: float):
        super().__init__(f"frame norm {norm:.3e} exceeds {BLOWUP_NORM:.0e} at node {node}")
        self.node = node
        self.norm = norm


class NonFlatConnectionError(RuntimeError):
    def __init__(self, message: str, holonomy: float):
        super().__init__(message)
        self.holonomy = holonomy


class HarmonicSequenceError(ValueError):
    def __init__(self, message: str, index: int, node: tuple[int, int] | None = None):
        super().__init__(message)
        self.index = index
        self.node = node


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------


def _lagrange_weights(s: np.ndarray) -> np.ndarray:
    """Cubic Lagrange weights on nodes 0..3 at positions s, shape (4, *s.shape)."""
    s = np.asarray(s, dtype=float)
    w = np.ones((4,) + s.shape)
    for k in range(4):
        for m in range(4):
            if m != k:
                w[k] *= (s - m) / (k - m)
    return w


class _EdgeSampler:
    """Connection component along one axis, interpolated inside grid cells."""

    def __init__(self, conn: ConnectionField, axis: int):
        self.grid = conn.grid
        self.axis = axis
        self.A = conn.A_x() if axis == 0 else conn.A_y()
        self.n_axis = self.grid.nx if axis == 0 else self.grid.ny
        self.h = self.grid.dx if axis == 0 else self.grid.dy
        self.periodic = self.grid.topology == "torus"

    def __call__(self, m: np.ndarray, other: np.ndarray, s: float) -> np.ndarray:
        """Values at fractional position ``m + s`` (0 <= s <= 1) along the axis."""
        m = np.asarray(m)
        if self.periodic:
            k0 = m - 1
            pos = np.full(m.shape, 1.0 + s)
        else:
            k0 = np.clip(m - 1, 0, self.n_axis - 4)
            pos = m + s - k0
        out = 0
        weights = _lagrange_weights(pos)
        for k in range(4):
            idx = (k0 + k) % self.n_axis
            w = weights[k]
            vals = self.A[idx, other] if self.axis == 0 else self.A[other, idx]
            out = out + w[..., None, None] * vals
        return out


def _rk4_edge(sampler: _EdgeSampler, P: np.ndarray, m: np.ndarray, other: np.ndarray, sign: int) -> np.ndarray:
    """Integrate dP/dt = P A_axis over one cell.  ``sign=+1`` moves from node
    m to m+1; ``sign=-1`` moves from node m+1 to m."""
    h = 1.0 / SUBSTEPS
    d = sign * sampler.h
    positions = np.linspace(0.0, 1.0, 2 * SUBSTEPS + 1)
    if sign < 0:
        positions = positions[::-1]
    cache = [sampler(m, other, s) for s in positions]
    for k in range(SUBSTEPS):
        A0, Am, A1 = cache[2 * k], cache[2 * k + 1], cache[2 * k + 2]
        k1 = P @ A0
        k2 = (P + 0.5 * h * d * k1) @ Am
        k3 = (P + 0.5 * h * d * k2) @ Am
        k4 = (P + h * d * k3) @ A1
        P = P + (h * d / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return P


def _check_blowup(P: np.ndarray, nodes: Sequence[tuple[int, int]]) -> None:
    norms = np.linalg.norm(P.reshape(-1, *P.shape[-2:]), axis=(-2, -1))
    if not np.all(np.isfinite(norms)) or norms.max() > BLOWUP_NORM:
        k = int(np.nanargmax(np.where(np.isfinite(norms), norms, np.inf)))
        raise FrameBlowupError(tuple(nodes[k]), float(norms[k]))


@dataclass
class FramePath:
    nodes: list[tuple[int, int]]
    frames: np.ndarray  # (len(nodes), n, n)
    integrator: dict = field(default_factory=dict)

    @property
    def end(self) -> np.ndarray:
        return self.frames[-1]

    def det_drift(self) -> float:
        d = np.linalg.det(self.frames)
        return float(np.abs(d - d[0]).max())


def _step(grid: Grid2D, a: tuple[int, int], b: tuple[int, int]) -> tuple[int, int, int]:
    """(axis, m, sign) of the unit edge a -> b."""
    for p in (a, b):
        if not (0 <= p[0] < grid.nx and 0 <= p[1] < grid.ny):
            raise PathError(f"node {p} is outside the {grid.nx}x{grid.ny} grid")
    di, dj = b[0] - a[0], b[1] - a[1]
    if grid.topology == "torus":
        di = (di + 1) % grid.nx - 1 if abs(di) == grid.nx - 1 else di
        dj = (dj + 1) % grid.ny - 1 if abs(dj) == grid.ny - 1 else dj
    if abs(di) + abs(dj) != 1:
        raise PathError(f"nodes {a} and {b} are not adjacent")
    if di:
        return 0, (a[0] if di > 0 else b[0]), (1 if di > 0 else -1)
    return 1, (a[1] if dj > 0 else b[1]), (1 if dj > 0 else -1)


def parallel_transport(conn: ConnectionField, path: Sequence[tuple[int, int]], start_frame: np.ndarray | None = None) -> FramePath:
    """Solve dP/dt = P A(gamma') along a lattice path with RK4.

    Each unit edge is split into four steps; the coefficients between nodes
    come from cubic interpolation along the edge direction.
    """
    n = conn.n
    P = np.eye(n, dtype=complex) if start_frame is None else np.array(start_frame, dtype=complex)
    if abs(np.linalg.det(P)) < 1e-14:
        raise ValueError("start frame must be invertible")
    samplers = {0: _EdgeSampler(conn, 0), 1: _EdgeSampler(conn, 1)}
    nodes = [tuple(map(int, p)) for p in path]
    frames = [P]
    for a, b in zip(nodes[:-1], nodes[1:]):
        axis, m, sign = _step(conn.grid, a, b)
        other = np.array(a[1] if axis == 0 else a[0])
        P = _rk4_edge(samplers[axis], P[None], np.array([m]), other[None], sign)[0]
        _check_blowup(P[None], [b])
        frames.append(P)
    return FramePath(nodes, np.array(frames), {"method": "rk4", "substeps": SUBSTEPS, "interpolation": "cubic"})


def develop_frames(conn: ConnectionField, root: tuple[int, int] | None = None) -> tuple[np.ndarray, tuple[int, int]]:
    """Transport the identity over a comb spanning tree.

    The tree runs along the root row in x and then along every column in
    y; columns are processed together.  Returns frames (nx, ny, n, n).
    """
    grid = conn.grid
    nx, ny, n = grid.nx, grid.ny, conn.n
    root = (nx // 2, ny // 2) if root is None else tuple(root)
    if not (0 <= root[0] < nx and 0 <= root[1] < ny):
        raise PathError(f"root {root} is outside the grid")
    i0, j0 = root
    P = np.zeros((nx, ny, n, n), dtype=complex)
    P[i0, j0] = np.eye(n)
    sx, sy = _EdgeSampler(conn, 0), _EdgeSampler(conn, 1)
    row = np.array([j0])
    for i in range(i0, nx - 1):
        P[i + 1, j0] = _rk4_edge(sx, P[i, j0][None], np.array([i]), row, 1)[0]
    for i in range(i0, 0, -1):
        P[i - 1, j0] = _rk4_edge(sx, P[i, j0][None], np.array([i - 1]), row, -1)[0]
    _check_blowup(P[:, j0], [(i, j0) for i in range(nx)])
    cols = np.arange(nx)
    for j in range(j0, ny - 1):
        P[:, j + 1] = _rk4_edge(sy, P[:, j], np.full(nx, j), cols, 1)
    for j in range(j0, 0, -1):
        P[:, j - 1] = _rk4_edge(sy, P[:, j], np.full(nx, j - 1), cols, -1)
    _check_blowup(P, [(i, j) for i in range(nx) for j in range(ny)])
    return P, root


def _square_loop(corner: tuple[int, int], side: int) -> list[tuple[int, int]]:
    i, j = corner
    path = [(i + k, j) for k in range(side + 1)]
    path += [(i + side, j + k) for k in range(1, side + 1)]
    path += [(i + side - k, j + side) for k in range(1, side + 1)]
    path += [(i, j + side - k) for k in range(1, side + 1)]
    return path


def loop_holonomy(conn: ConnectionField, corner: tuple[int, int], side: int) -> float:
    """||P - I|| after transporting around a square loop of the given side."""
    fp = parallel_transport(conn, _square_loop(corner, side))
    return float(np.linalg.norm(fp.end - np.eye(conn.n)))


def holonomy_report(conn: ConnectionField, sides: Sequence[int] = (2, 4, 8), per_side: int = 3, seed: int = 0) -> dict:
    """Loop holonomy over square loops placed at random in the interior."""
    rng = np.random.default_rng(seed)
    grid = conn.grid
    margin = 2
    out = {}
    for side in sides:
        hi_x, hi_y = grid.nx - margin - side, grid.ny - margin - side
        if hi_x <= margin or hi_y <= margin:
            continue
        vals = []
        for _ in range(per_side):
            corner = (int(rng.integers(margin, hi_x)), int(rng.integers(margin, hi_y)))
            vals.append(loop_holonomy(conn, corner, side))
        out[side] = max(vals)
    return {"per_side": out, "max": max(out.values()) if out else 0.0}


# ---------------------------------------------------------------------------
# immersions
# ---------------------------------------------------------------------------


def real_frame(conn: ConnectionField, node: tuple[int, int]) -> np.ndarray:
    """Columns span the vectors v with L conj(v) = v at a node.

    For the split G2 representation these are the imaginary-octonion axes;
    otherwise a real basis of unit volume is chosen from the fixed set of
    v -> L0 conj(v) and moved by exp(Omega) at the node.
    """
    model = conn.model
    n = model.n
    if model.algebra == "g2":
        U0 = np.linalg.inv(octonion.g2_basis_map())
    else:
        L0 = model.involutions.L0
        cands = []
        for j in range(n):
            e = np.zeros(n, complex)
            e[j] = 1.0
            for v in (e, 1j * e):
                cands.append(v + L0 @ np.conj(v))
        C = np.array(cands).T
        stacked = np.vstack([C.real, C.imag])
        _, _, piv = sla.qr(stacked, pivoting=True)
        U0 = C[:, np.sort(piv[:n])]
        # unit volume, so that affine invariants refer to the SL(n) structure
        U0 = U0 / abs(np.linalg.det(U0)) ** (1.0 / n)
    om = model.omega_matrix(conn.omega[:, node[0], node[1]])
    return np.exp(om)[:, None] * U0


@dataclass
class ImmersionSample:
    grid: Grid2D
    points: np.ndarray  # (nx, ny, N) real
    gram: np.ndarray | None  # N x N; None for the affine (sl3) case
    h0: float | None
    section_index: int | None
    signature: tuple[int, int] | None
    metadata: dict = field(default_factory=dict)

    def pair(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Bilinear pairing over the last axis."""
        if self.gram is None:
            raise ValueError("no invariant metric for this representation")
        return np.einsum("...a,ab,...b->...", u, self.gram, v)

    def derivative(self, which: str, f: np.ndarray | None = None, order: int = 4) -> np.ndarray:
        f = self.points if f is None else f
        moved = np.moveaxis(f, -1, 0)
        op = {"x": self.grid.d_dx, "y": self.grid.d_dy, "z": self.grid.d_z, "zbar": self.grid.d_zbar}[which]
        return np.moveaxis(op(moved, order), 0, -1)

    def quadric_defect(self) -> float:
        return float(np.abs(self.pair(self.points, self.points) - self.h0).max())

    def induced_metric(self, order: int = 4) -> tuple[np.ndarray, np.ndarray]:
        """(<f_z, f_z>, <f_z, f_zbar>) per node."""
        fz = self.derivative("z", order=order)
        return self.pair(fz, fz), self.pair(fz, np.conj(fz))

    def tension(self, order: int = 4) -> np.ndarray:
        """f_{z zbar} - lambda f with lambda = -<f_z, f_zbar>/h0, per node."""
        lap = np.moveaxis(self.grid.laplacian(np.moveaxis(self.points, -1, 0), order), 0, -1)
        fzz = 0.25 * lap
        _, conf = self.induced_metric(order)
        lam = -conf / self.h0
        return fzz - lam[..., None] * self.points

    def report(self, order: int = 4, margin: int = 3) -> dict:
        mask = self.grid.interior_mask(margin)
        out = dict(self.metadata)
        if self.gram is not None and self.h0 is not None:
            cz, conf = self.induced_metric(order)
            tens = np.linalg.norm(self.tension(order), axis=-1)
            out.update(
                quadric=self.quadric_defect(),
                conformality=float(np.abs(cz[mask]).max()),
                induced_min=float(conf.real[mask].min()),
                induced_max=float(conf.real[mask].max()),
                tension=float(tens[mask].max()),
            )
        return out


def develop_immersion(
    conn: ConnectionField,
    section: int | None = None,
    root: tuple[int, int] | None = None,
    loop_tol: float | None = 1e-3,
    frames: np.ndarray | None = None,
) -> ImmersionSample:
    """Develop a real section of the representation into R^N.

    ``section`` indexes the frame vector (default: the model's distinguished
    section).  A loop-holonomy test guards against non-flat input unless
    ``loop_tol`` is None.
    """
    model = conn.model
    k = model.section if section is None else section
    if k is None:
        raise ValueError(f"representation {model.label} has no distinguished real section")
    e = np.zeros(model.n, complex)
    e[k] = 1.0
    if np.abs(model.involutions.L0 @ e - e).max() > 1e-12:
        raise ValueError(f"frame vector {k} is not real for the representation")
    hol = None
    if loop_tol is not None:
        hol = holonomy_report(conn, sides=(4,), per_side=2)["max"]
        if hol > loop_tol:
            raise NonFlatConnectionError(f"loop holonomy {hol:.3e} exceeds {loop_tol:.1e}", hol)
    if frames is None:
        frames, root = develop_frames(conn, root)
    elif root is None:
        root = (conn.grid.nx // 2, conn.grid.ny // 2)
    U = real_frame(conn, root)
    R = np.linalg.inv(U)
    pts = np.einsum("ab,xybc,c->xya", R, frames, e)
    reality = float(np.abs(pts.imag).max())
    gram = None
    h0 = None
    signature = None
    if model.bilinear is not None:
        G = U.T @ model.bilinear @ U
        gram = G.real
        h0 = float(model.bilinear[k, k].real)
        ev = np.linalg.eigvalsh(gram)
        signature = (int(np.sum(ev > 0)), int(np.sum(ev < 0)))
    meta = {"reality_defect": reality, "root": list(root), "rep": model.label}
    if hol is not None:
        meta["loop_holonomy"] = hol
    return ImmersionSample(conn.grid, pts.real.copy(), gram, h0, k, signature, meta)


# ---------------------------------------------------------------------------
# harmonic sequence
# ---------------------------------------------------------------------------


@dataclass
class HarmonicSequence:
    ladder: list[np.ndarray]
    h_values: list[np.ndarray]
    q_recovered: np.ndarray | None
    terminated_at: int | None
    grid: Grid2D
    margin: int

    @property
    def superminimal(self) -> bool:
        return self.terminated_at is not None

    def w_recovered(self) -> np.ndarray:
        """w_i = (1/2) ln |h_i| for i >= 1, shape (r, nx, ny)."""
        return np.array([0.5 * np.log(np.abs(h.real)) for h in self.h_values[1:]])

    def orthogonality_defects(self, gram: np.ndarray) -> dict[str, float]:
        mask = self.grid.interior_mask(self.margin)
        herm = iso = 0.0
        L = self.ladder[: len(self.h_values)]
        for i, a in enumerate(L):
            for j, b in enumerate(L):
                hv = np.einsum("...a,ab,...b->...", a, gram, np.conj(b))
                bv = np.einsum("...a,ab,...b->...", a, gram, b)
                scale = np.sqrt(np.abs(self.h_values[i]) * np.abs(self.h_values[j]))
                if i != j:
                    herm = max(herm, float((np.abs(hv) / scale)[mask].max()))
                if i + j > 0:
                    iso = max(iso, float((np.abs(bv) / scale)[mask].max()))
        return {"hermitian": herm, "isotropic": iso}


def harmonic_sequence(imm: ImmersionSample, r: int, order: int = 4, vanish_tol: float = 1e-8) -> HarmonicSequence:
    """Ladder phi_0 = f, phi_{i+1} = (phi_i)_z - <(phi_i)_z, conj phi_i>/h_i phi_i.

    Returns phi_0..phi_{r+1}, h_i = <phi_i, conj phi_i> for i <= r, and the
    top pairing <phi_{r+1}, phi_{r+1}>.  A ladder member vanishing on the
    whole patch ends the sequence early (superminimal case); one vanishing
    at isolated nodes raises.
    """
    if imm.gram is None:
        raise ValueError("harmonic sequence needs an invariant metric")
    N = imm.points.shape[-1]
    if 2 * r + 1 > N:
        raise HarmonicSequenceError(f"r = {r} needs 2r+1 <= {N} independent ladder vectors", r)
    margin = (r + 1) * (order // 2 + 1)
    mask = imm.grid.interior_mask(margin)
    phi = imm.points.astype(complex)
    ladder = [phi]
    hs: list[np.ndarray] = []
    terminated = None
    for i in range(r + 1):
        h = imm.pair(phi, np.conj(phi))
        scale = max(float(np.abs(imm.points).max()) ** 2, 1.0)
        small = np.abs(h[mask]) < vanish_tol * scale
        if small.all():
            terminated = i
            break
        if small.any():
            node = tuple(int(v) for v in np.argwhere(mask)[np.argmax(small)])
            raise HarmonicSequenceError(f"h_{i} vanishes at node {node}", i, node)
        hs.append(h)
        d = imm.derivative("z", phi, order)
        coeff = imm.pair(d, np.conj(phi)) / h
        phi = d - coeff[..., None] * phi
        ladder.append(phi)
    q = None
    if terminated is None:
        q = imm.pair(ladder[-1], ladder[-1])
    return HarmonicSequence(ladder, hs, q, terminated, imm.grid, margin)


# ---------------------------------------------------------------------------
# affine spheres, G2 curves, uniformizing sections
# ---------------------------------------------------------------------------


def _solve_frame(B: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Coefficients of rhs (..., 3) in the basis given by the columns of B (..., 3, 3)."""
    return np.linalg.solve(B, rhs[..., None])[..., 0]


def affine_sphere_check(imm: ImmersionSample, order: int = 2, margin: int | None = None) -> dict:
    """Shape operator of a surface in R^3 from finite differences.

    With the position vector as transversal, f_ij = Gamma^k_ij f_k + g_ij f.
    The Blaschke metric is h = g |det[f_x, f_y, f]|^{1/2} / |det g|^{1/4};
    the affine normal is xi = (1/2) Lap_h f and xi_i = -S^k_i f_k.  For a
    hyperbolic affine sphere centred at the origin S = -I.
    """
    f = imm.points
    if f.shape[-1] != 3:
        raise ValueError("affine sphere check needs a surface in R^3")
    d = lambda g, w: imm.derivative(w, g, order)  # noqa: E731
    fx, fy = d(f, "x"), d(f, "y")
    basis = np.stack([fx, fy, f], axis=-1)
    second = {"xx": d(fx, "x"), "xy": 0.5 * (d(fx, "y") + d(fy, "x")), "yy": d(fy, "y")}
    g = {k: _solve_frame(basis, v)[..., 2] for k, v in second.items()}
    detg = g["xx"] * g["yy"] - g["xy"] ** 2
    vol = np.linalg.det(basis)
    factor = np.sqrt(np.abs(vol)) / np.abs(detg) ** 0.25
    sign = np.sign(np.median(g["xx"]))
    hxx, hxy, hyy = (sign * factor * g[k] for k in ("xx", "xy", "yy"))
    deth = hxx * hyy - hxy**2
    sq = np.sqrt(deth)
    inv = {"xx": hyy / deth, "xy": -hxy / deth, "yy": hxx / deth}
    fxm, fym = np.moveaxis(fx, -1, 0), np.moveaxis(fy, -1, 0)
    jx = sq * (inv["xx"] * fxm + inv["xy"] * fym)
    jy = sq * (inv["xy"] * fxm + inv["yy"] * fym)
    grid = imm.grid
    lap = (grid.d_dx(jx, order) + grid.d_dy(jy, order)) / sq
    xi = 0.5 * np.moveaxis(lap, 0, -1)
    xi_x, xi_y = d(xi, "x"), d(xi, "y")
    cx, cy = _solve_frame(basis, xi_x), _solve_frame(basis, xi_y)
    # xi_i = -S^k_i f_k, so columns of -S are (cx[:2], cy[:2])
    S = -np.stack([cx[..., :2], cy[..., :2]], axis=-1)
    m = 4 * (order // 2 + 1) if margin is None else margin
    mask = grid.interior_mask(m)
    dev = np.abs(S + np.eye(2))[mask].max()
    normal = max(np.abs(cx[..., 2])[mask].max(), np.abs(cy[..., 2])[mask].max())
    xi_vs_f = np.abs(xi - f)[mask].max()
    definite = bool(np.all(detg[mask] > 0))
    return {
        "shape_operator_deviation": float(dev),
        "normal_component": float(normal),
        "xi_minus_f": float(xi_vs_f),
        "locally_convex": definite,
        "margin": m,
        "order": order,
    }


def _cross_tensor() -> np.ndarray:
    """C with (x cross y)^c = C[a, b, c] x^a y^b on imaginary octonions."""
    phi = octonion.phi_tensor().astype(float)
    ginv = np.diag(1.0 / np.array(octonion._IM_SIGNS, dtype=float))
    return np.einsum("abd,dc->abc", phi, ginv)


def g2_cross_defect(imm: ImmersionSample, order: int = 4, margin: int = 3) -> dict:
    """Max of |s x s_z - i s_z| and the quadric defect for a developed G2
    section in imaginary-octonion coordinates."""
    s = imm.points
    sz = imm.derivative("z", order=order)
    C = _cross_tensor()
    cr = np.einsum("abc,...a,...b->...c", C, s.astype(complex), sz)
    mask = imm.grid.interior_mask(margin)
    plus = np.abs(cr - 1j * sz)[mask].max()
    minus = np.abs(cr + 1j * sz)[mask].max()
    return {"defect_plus_i": float(plus), "defect_minus_i": float(minus), "scale": float(np.abs(sz[mask]).max())}


def uniformizing_section(z: np.ndarray, a: float, b: float) -> np.ndarray:
    """Covariantly constant real section [s1, s2] of the uniformizing
    connection on the upper half plane: s2 = (a z + b) e^{i pi/4},
    s1 = conj(s2) / (sqrt(2) y)."""
    z = np.asarray(z, dtype=complex)
    s2 = (a * z + b) * np.exp(0.25j * np.pi)
    s1 = np.conj(s2) / (np.sqrt(2.0) * z.imag)
    return np.stack([s1, s2], axis=-1)


def uniformizing_section_defect(conn: ConnectionField, pairs: Sequence[tuple[float, float]] = ((1, 0), (0, 1)), root=None) -> float:
    """Max over nodes of |P(z) s(z) - s(root)| for the explicit sections,
    where P transports the root frame over the spanning tree."""
    P, root = develop_frames(conn, root)
    z = conn.grid.z
    worst = 0.0
    for a, b in pairs:
        s = uniformizing_section(z, a, b)
        moved = np.einsum("xyij,xyj->xyi", P, s)
        worst = max(worst, float(np.abs(moved - s[root]).max()))
    return worst


def verify_convex_foliated(z: complex, theta: float, tol: float = 1e-12) -> dict:
    """Check a a_1 + a_2 = 0 for the convex-foliated developing map data.

    a = x + y (1 + sin t) / cos t, a_1 = sqrt(3/2) sin(t/2 - pi/4) / y,
    a_2 = sqrt(3/2) (cos(t/2 - pi/4) - (x/y) sin(t/2 - pi/4)).
    """
    x, y = float(np.real(z)), float(np.imag(z))
    if y <= 0:
        raise ValueError("z must lie in the upper half plane")
    c = np.cos(theta)
    if abs(c) < 1e-12:
        raise ValueError("a has a pole at cos(theta) = 0; the identity holds there by continuity")
    a = x + y * (1 + np.sin(theta)) / c
    k = np.sqrt(1.5)
    ph = theta / 2 - np.pi / 4
    a1 = k * np.sin(ph) / y
    a2 = k * np.cos(ph) - k * (x / y) * np.sin(ph)
    dev = a * a1 + a2
    scale = max(1.0, abs(a * a1), abs(a2))
    return {"a": a, "a1": a1, "a2": a2, "deviation": float(abs(dev)), "relative": float(abs(dev) / scale), "ok": abs(dev) <= tol * scale}


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def write_points_csv(path: str | Path, imm: ImmersionSample) -> None:
    path = Path(path)
    nx, ny, N = imm.points.shape
    with path.open("w") as fh:
        fh.write("ix,iy," + ",".join(f"c{k}" for k in range(N)) + "\n")
        for i in range(nx):
            for j in range(ny):
                fh.write(f"{i},{j}," + ",".join(f"{v:.17g}" for v in imm.points[i, j]) + "\n")


def write_obj(path: str | Path, imm: ImmersionSample, coords: Sequence[int] = (0, 1, 2)) -> None:
    """Indexed triangle mesh of three chosen coordinates of the immersion."""
    path = Path(path)
    nx, ny, _ = imm.points.shape
    P = imm.points[..., list(coords)]
    with path.open("w") as fh:
        fh.write(f"# {nx}x{ny} grid, coordinates {list(coords)}\n")
        for i in range(nx):
            for j in range(ny):
                fh.write("v " + " ".join(f"{v:.12g}" for v in P[i, j]) + "\n")
        vid = lambda i, j: i * ny + j + 1  # noqa: E731
        for i in range(nx - 1):
            for j in range(ny - 1):
                fh.write(f"f {vid(i, j)} {vid(i + 1, j)} {vid(i + 1, j + 1)}\n")
                fh.write(f"f {vid(i, j)} {vid(i + 1, j + 1)} {vid(i, j + 1)}\n")
