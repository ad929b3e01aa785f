"""Flat connections built from solved Toda fields.

Each supported family is attached to an explicit matrix representation:
a cyclic Higgs field ``Phi = e_tilde + q e_top``, a set of diagonal channel
matrices ``D_c`` with ``Omega = sum_c w_c D_c`` and a constant real
structure ``L0``.  With ``L = exp(2 Omega) L0`` the connection is

    A_z    = -2 d_z Omega + Phi
    A_zbar = L conj(Phi) L^{-1}

whose flatness is equivalent to the Toda system.  The Toda terms implied
by a representation can be recovered directly from the matrices
(:func:`derive_toda_terms`), giving an independent route to the equations.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import octonion
from .lie_core import PrincipalSL2, build_root_datum, fold_restricted_roots, principal_sl2
from .toda import Grid2D, HoloDifferential, ScalarField2D, TodaSystem, TodaTerm

__all__ = [
    "Involutions",
    "RepresentationModel",
    "ConnectionField",
    "CurvatureReport",
    "representation_for",
    "representation_model",
    "derive_toda_terms",
    "cyclic_system",
    "assemble_connection",
    "constant_connection",
    "curvature",
    "verify_real_form",
    "pfaffian",
    "top_invariant",
    "lie_algebra_basis",
]


# ---------------------------------------------------------------------------
# involutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Involutions:
    """Real structures on the representation.

    ``lambda_hat(X) = L0 conj(X) L0^{-1}`` (split form).  ``sigma`` is either
    conjugation by a sign matrix ``S`` or ``X -> -T X^t T^{-1}``.  The compact
    involution is ``rho_hat = sigma o lambda_hat``.
    """

    L0: np.ndarray
    S: np.ndarray | None = None
    T: np.ndarray | None = None
    H: np.ndarray | None = None
    E: np.ndarray | None = None

    def __post_init__(self) -> None:
        if (self.S is None) == (self.T is None):
            raise ValueError("exactly one of S and T defines sigma")

    def lambda_hat(self, X: np.ndarray) -> np.ndarray:
        return self.L0 @ np.conj(X) @ np.linalg.inv(self.L0)

    def sigma(self, X: np.ndarray) -> np.ndarray:
        if self.S is not None:
            return self.S @ X @ np.linalg.inv(self.S)
        return -self.T @ X.T @ np.linalg.inv(self.T)

    def rho_hat(self, X: np.ndarray) -> np.ndarray:
        return self.sigma(self.lambda_hat(X))

    def lambda_vector(self, v: np.ndarray) -> np.ndarray:
        return self.L0 @ np.conj(v)

    def is_trivial_sigma(self) -> bool:
        if self.S is None:
            return False
        return bool(np.allclose(self.S, np.eye(len(self.S))) or np.allclose(self.S, -np.eye(len(self.S))))

    def algebra_defects(self, samples: Sequence[np.ndarray]) -> dict[str, float]:
        """Max deviations of rho^2, lambda^2, sigma^2 from the identity and
        of rho lambda, lambda rho from sigma over the sample matrices."""
        out = dict.fromkeys(["rho2", "lambda2", "sigma2", "rho_lambda", "lambda_rho"], 0.0)
        for X in samples:
            s = self.sigma(X)
            vals = {
                "rho2": self.rho_hat(self.rho_hat(X)) - X,
                "lambda2": self.lambda_hat(self.lambda_hat(X)) - X,
                "sigma2": self.sigma(s) - X,
                "rho_lambda": self.rho_hat(self.lambda_hat(X)) - s,
                "lambda_rho": self.lambda_hat(self.rho_hat(X)) - s,
            }
            for k, v in vals.items():
                out[k] = max(out[k], float(np.abs(v).max()))
        return out


# ---------------------------------------------------------------------------
# representation models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RepresentationModel:
    label: str
    rep: PrincipalSL2
    phi_scale: float
    channel_diagonals: np.ndarray  # (channels, n)
    channels: tuple[str, ...]
    involutions: Involutions
    bilinear: np.ndarray | None  # invariant form B with X^t B + B X = 0
    section: int | None  # distinguished lambda-real section index
    algebra: str  # "sl", "sp", "so" or "g2": which Lie algebra the matrices lie in
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.rep.rep_dim

    def phi_parts(self) -> tuple[np.ndarray, np.ndarray]:
        """Phi = P0 + q P1."""
        return self.phi_scale * self.rep.e_tilde, self.phi_scale * self.rep.e_top

    def phi(self, q: np.ndarray | complex) -> np.ndarray:
        P0, P1 = self.phi_parts()
        q = np.asarray(q, dtype=complex)
        return P0 + q[..., None, None] * P1

    def omega_matrix(self, w: np.ndarray) -> np.ndarray:
        """Diagonal of Omega, shape (..., n) from channels (C, ...)."""
        return np.tensordot(np.moveaxis(np.asarray(w), 0, -1), self.channel_diagonals, axes=(-1, 0))


def _swap(n: int) -> np.ndarray:
    return np.fliplr(np.eye(n))


def _sl2(scale: float) -> RepresentationModel:
    rep = principal_sl2("sl2_fund")
    H = _swap(2)
    inv = Involutions(H, T=H, H=H)
    return RepresentationModel(
        "sl2_fund", rep, scale, np.array([[1.0, -1.0]]), ("v",), inv, None, None, "sl", {"scale": scale}
    )


def _sl3() -> RepresentationModel:
    rep = principal_sl2("sl3_fund")
    H = _swap(3)
    inv = Involutions(H, T=H, H=H)
    return RepresentationModel("sl3_fund", rep, 1.0, np.array([[1.0, 0.0, -1.0]]), ("w",), inv, None, 1, "sl")


def _sp4() -> RepresentationModel:
    rep = principal_sl2("sp4_fund")
    H = _swap(4)
    omega = np.array([[0, 0, 0, 1], [0, 0, -1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]], dtype=float)
    inv = Involutions(H, T=H, H=H)
    D = np.array([[1.0, 0, 0, -1], [0, -1, 1, 0]])
    return RepresentationModel("sp4_fund", rep, 1.0, D, ("a", "b"), inv, omega, None, "sp")


def _g2() -> RepresentationModel:
    rep = principal_sl2("g2_7dim")
    H = _swap(7)
    E = octonion.g2_metric_E()
    inv = Involutions(H, T=H, H=H, E=E)
    D = np.array([[1.0, 1, 0, 0, 0, -1, -1], [1.0, 0, 1, 0, -1, 0, -1]])
    return RepresentationModel("g2_7dim", rep, 1.0, D, ("X", "Y"), inv, E, 3, "g2")


def _so_even(r: int, eps0: int, eps_chain: Sequence[int], eps_top: int) -> RepresentationModel:
    rep = principal_sl2(f"so_pq_harmonic({r},even)", eps0=eps0, eps_top=eps_top)
    labels = rep.params["labels"]
    idx = {k: p for p, k in enumerate(labels)}
    n = len(labels)
    L0 = np.zeros((n, n))
    B = np.zeros((n, n))
    D = np.zeros((r, n))
    signs = {0: eps0, r + 1: eps_top}
    for i in range(1, r + 1):
        e = eps_chain[i - 1]
        L0[idx[-i], idx[i]] = L0[idx[i], idx[-i]] = e
        B[idx[-i], idx[i]] = B[idx[i], idx[-i]] = 1.0
        D[i - 1, idx[-i]], D[i - 1, idx[i]] = 1.0, -1.0  # Omega = -W
        signs[i] = signs[-i] = e
    L0[idx[0], idx[0]] = L0[idx[r + 1], idx[r + 1]] = 1.0
    B[idx[0], idx[0]] = eps0
    B[idx[r + 1], idx[r + 1]] = eps_top
    S = np.diag([float(signs[k]) for k in labels])
    inv = Involutions(L0, S=S)
    return RepresentationModel(
        rep.label,
        rep,
        1.0,
        D,
        tuple(f"w{i}" for i in range(1, r + 1)),
        inv,
        B,
        idx[0],
        "so",
        {"labels": labels, "eps0": eps0, "eps_chain": list(eps_chain), "eps_top": eps_top},
    )


def _so_odd(r: int, eps0: int, eps_chain: Sequence[int], eps: int) -> RepresentationModel:
    rep = principal_sl2(f"so_pq_harmonic({r},odd)", eps0=eps0)
    labels = rep.params["labels"]
    idx = {k: p for p, k in enumerate(labels)}
    n = len(labels)
    L0 = np.zeros((n, n))
    B = np.zeros((n, n))
    D = np.zeros((r + 1, n))
    signs = {0: eps0}
    for i in range(1, r + 2):
        e = eps_chain[i - 1] if i <= r else eps
        L0[idx[-i], idx[i]] = L0[idx[i], idx[-i]] = e
        B[idx[-i], idx[i]] = B[idx[i], idx[-i]] = 1.0
        D[i - 1, idx[-i]], D[i - 1, idx[i]] = 1.0, -1.0
        signs[i] = signs[-i] = e
    L0[idx[0], idx[0]] = 1.0
    B[idx[0], idx[0]] = eps0
    S = np.diag([float(signs[k]) for k in labels])
    inv = Involutions(L0, S=S)
    return RepresentationModel(
        rep.label,
        rep,
        1.0,
        D,
        tuple(f"w{i}" for i in range(1, r + 1)) + ("eta",),
        inv,
        B,
        idx[0],
        "so",
        {"labels": labels, "eps0": eps0, "eps_chain": list(eps_chain), "eps": eps},
    )


_SO_LABEL = re.compile(r"so_pq_harmonic\((\d+),(even|odd)\)")


def representation_model(label: str, **params) -> RepresentationModel:
    """Model by representation label.  The so families take ``eps0``,
    ``eps_chain`` and ``eps_top`` (even) or ``eps`` (odd)."""
    if label == "sl2_fund":
        return _sl2(params.get("scale", 1.0))
    if label == "sl3_fund":
        return _sl3()
    if label == "sp4_fund":
        return _sp4()
    if label == "g2_7dim":
        return _g2()
    m = _SO_LABEL.fullmatch(label.replace(" ", ""))
    if m:
        r = int(m.group(1))
        chain = params.get("eps_chain", [1] * r)
        eps0 = params.get("eps0", 1)
        if m.group(2) == "even":
            return _so_even(r, eps0, chain, params.get("eps_top", 1))
        return _so_odd(r, eps0, chain, params.get("eps", 1))
    raise ValueError(f"unsupported representation {label!r}")


def _eps_from_mu(mu: Sequence[int], eps0: int) -> tuple[list[int], int]:
    """h_i = eps_i e^{2 w_i} with mu_i = eps_{i-1} eps_i and mu_{r+1} = eps eps_r."""
    chain, prev = [], eps0
    for m in mu[:-1]:
        prev = prev * m
        chain.append(prev)
    return chain, mu[-1] * chain[-1]


def representation_for(system: TodaSystem) -> RepresentationModel:
    """Representation in which the flat connection of a family is assembled."""
    fam = system.family
    p = system.params
    if fam == "tzitzeica":
        return _sl3()
    if fam == "uniformizing":
        return _sl2(1.0)
    if fam == "sinh_gordon":
        return _sl2(np.sqrt(2.0))
    if fam in ("d2_signed", "d23_superconformal"):
        r = p["r"]
        eps0 = p.get("eps0", 1)
        chain, eps_top = _eps_from_mu(p["mu"], eps0)
        return _so_even(r, eps0, chain, eps_top)
    if fam == "b1_odd_definite":
        return _so_odd(p["r"], p["eps0"], p["eps_chain"], p["eps"])
    if fam == "cyclic":
        return representation_model(p["rep"], **p.get("rep_params", {}))
    raise ValueError(f"no connection representation for family {fam!r}")


# ---------------------------------------------------------------------------
# Toda terms from a representation
# ---------------------------------------------------------------------------


def derive_toda_terms(model: RepresentationModel) -> list[TodaTerm]:
    """Toda terms implied by flatness of the representation's connection.

    The diagonal of ``-[Phi, exp(2 Omega) Psi exp(-2 Omega)]`` with
    ``Psi = L0 conj(Phi) L0^{-1}`` is a sum over index pairs (j, k) of
    ``Psi_jk Phi_kj exp(2 (Omega_j - Omega_k)) (E_jj - E_kk)``; each pair is
    projected onto the channels with the Gram matrix of the D_c.
    """
    P0, P1 = model.phi_parts()
    L0 = model.involutions.L0
    Li = np.linalg.inv(L0)
    Q0, Q1 = L0 @ np.conj(P0) @ Li, L0 @ np.conj(P1) @ Li
    D = model.channel_diagonals
    gram_inv = np.linalg.inv(D @ D.T)
    n = model.n
    terms: list[TodaTerm] = []
    for j in range(n):
        for k in range(n):
            if j == k:
                continue
            for (m, Pm), (nn, Qn) in [((0, P0), (0, Q0)), ((1, P1), (0, Q0)), ((0, P0), (1, Q1)), ((1, P1), (1, Q1))]:
                c = Qn[j, k] * Pm[k, j]
                if abs(c) < 1e-14:
                    continue
                a = (D[:, j] - D[:, k]).astype(complex)
                out = np.zeros(n)
                out[j], out[k] = 1.0, -1.0
                b = (gram_inv @ (D @ out)).astype(complex)
                terms.append(TodaTerm(complex(c), (m, nn), a, b, f"pair({j},{k})"))
    return terms


def cyclic_system(rep_label: str, q: HoloDifferential | complex = 1.0, **rep_params) -> TodaSystem:
    """Toda system derived from a representation's matrices."""
    model = representation_model(rep_label, **rep_params)
    if model.algebra == "so":
        diagram = "B_{}^(1)".format(model.rep.params["r"] + 1) if model.rep.params["parity"] == "odd" else None
        r = model.rep.params["r"]
        if diagram is None:
            diagram = "A_1^(1)" if r == 1 else f"D_{r + 1}^(2)"
    else:
        finite = {"sl2_fund": "A_1", "sl3_fund": "A_2", "sp4_fund": "C_2", "g2_7dim": "G_2"}[rep_label]
        diagram = fold_restricted_roots(finite)
    degree = model.rep.M + 1
    qq = q if isinstance(q, HoloDifferential) else HoloDifferential.constant(degree, q)
    terms = tuple(derive_toda_terms(model))
    return TodaSystem(
        build_root_datum(diagram),
        "cyclic",
        terms,
        model.channels,
        qq,
        (),
        None,
        {"rep": rep_label, "rep_params": dict(rep_params)},
    )


# ---------------------------------------------------------------------------
# connection fields
# ---------------------------------------------------------------------------


@dataclass
class ConnectionField:
    grid: Grid2D
    A_z: np.ndarray  # (nx, ny, n, n)
    A_zbar: np.ndarray
    rep_label: str
    model: RepresentationModel
    omega: np.ndarray  # channels (C, nx, ny)
    q_samples: np.ndarray
    source: dict = field(default_factory=dict)
    deriv_order: int = 2

    @property
    def n(self) -> int:
        return self.A_z.shape[-1]

    def real_structure(self) -> np.ndarray:
        """L = exp(2 Omega) L0 per node, shape (nx, ny, n, n)."""
        om = self.model.omega_matrix(self.omega)
        return np.exp(2 * om)[..., :, None] * self.model.involutions.L0

    def A_x(self) -> np.ndarray:
        return self.A_z + self.A_zbar

    def A_y(self) -> np.ndarray:
        return 1j * (self.A_z - self.A_zbar)

    def higgs(self) -> tuple[np.ndarray, np.ndarray]:
        """(Phi, Phi*) per node."""
        phi = self.model.phi(self.q_samples)
        return phi, self.A_zbar

    def to_json(self) -> dict:
        def enc(arr):
            return np.stack([arr.real, arr.imag], axis=-1).reshape(-1, self.n, self.n, 2).tolist()

        return {
            "grid": self.grid.to_json(),
            "rep": self.rep_label,
            "source": self.source,
            "layout": "node-major [ix * ny + iy][row][col] = [re, im]",
            "A_z": enc(self.A_z),
            "A_zbar": enc(self.A_zbar),
        }


def _check_q(qs: np.ndarray, allow_zeros: bool) -> None:
    small = np.abs(qs) < 1e-12
    if small.any() and not small.all() and not allow_zeros:
        node = tuple(int(v) for v in np.argwhere(small)[0])
        raise ValueError(f"holomorphic differential vanishes at node {node}; frames degenerate there")


def assemble_connection(
    system: TodaSystem,
    omega: ScalarField2D,
    q: HoloDifferential | None = None,
    order: int = 2,
    allow_zeros: bool = False,
) -> ConnectionField:
    """A_z = -2 d_z Omega + Phi and A_zbar = L conj(Phi) L^{-1} per node.

    A differential that vanishes identically is allowed (the Fuchsian and
    superminimal cases); isolated zeros raise unless ``allow_zeros``.
    """
    model = representation_for(system)
    if omega.n_channels != len(model.channels):
        raise ValueError("field channels do not match the representation")
    grid = omega.grid
    qd = q if q is not None else system.q
    qs = qd.samples(grid)
    _check_q(qs, allow_zeros)
    om = model.omega_matrix(omega.values)  # (nx, ny, n)
    d_om = grid.d_z(np.moveaxis(om, -1, 0), order=order)  # (n, nx, ny)
    phi = model.phi(qs)
    A_z = phi.copy()
    idx = np.arange(model.n)
    A_z[..., idx, idx] += -2.0 * np.moveaxis(d_om, 0, -1)
    L0 = model.involutions.L0
    Li = np.linalg.inv(L0)
    psi = L0 @ np.conj(phi) @ Li
    ex = np.exp(2 * om)
    A_zbar = ex[..., :, None] * psi / ex[..., None, :]
    return ConnectionField(
        grid,
        A_z,
        A_zbar,
        model.label,
        model,
        np.asarray(omega.values),
        qs,
        {"family": system.family, "params": dict(system.params)},
        order,
    )


def constant_connection(grid: Grid2D, A_z: np.ndarray, A_zbar: np.ndarray, model: RepresentationModel) -> ConnectionField:
    """Connection with the same matrices at every node (testing helper)."""
    shape = grid.shape + A_z.shape
    C = len(model.channels)
    return ConnectionField(
        grid,
        np.broadcast_to(A_z, shape).copy(),
        np.broadcast_to(A_zbar, shape).copy(),
        model.label,
        model,
        np.zeros((C,) + grid.shape),
        np.zeros(grid.shape, complex),
        {"constant": True},
    )


@dataclass
class CurvatureReport:
    F: np.ndarray
    norm: np.ndarray
    max_interior: float
    margin: int

    def to_json(self) -> dict:
        return {"max_interior": self.max_interior, "margin": self.margin, "mean": float(self.norm.mean())}


def _mat_d(grid: Grid2D, M: np.ndarray, which: str, order: int) -> np.ndarray:
    moved = np.moveaxis(M, (0, 1), (-2, -1))
    d = grid.d_z(moved, order) if which == "z" else grid.d_zbar(moved, order)
    return np.moveaxis(d, (-2, -1), (0, 1))


def curvature(conn: ConnectionField, order: int | None = None, margin: int | None = None) -> CurvatureReport:
    """F = d_z A_zbar - d_zbar A_z + [A_z, A_zbar] with centered differences.

    The max-norm report excludes ``margin`` boundary layers of a rectangle
    where one-sided differences are used.
    """
    order = conn.deriv_order if order is None else order
    grid = conn.grid
    F = _mat_d(grid, conn.A_zbar, "z", order) - _mat_d(grid, conn.A_z, "zbar", order)
    F = F + conn.A_z @ conn.A_zbar - conn.A_zbar @ conn.A_z
    norm = np.linalg.norm(F, axis=(-2, -1))
    m = (order // 2 + 1) if margin is None else margin
    mask = grid.interior_mask(m)
    return CurvatureReport(F, norm, float(norm[mask].max()), m)


def verify_real_form(conn: ConnectionField, involutions: Involutions | None = None) -> dict:
    """lambda-reality of the connection and sigma(Phi) = -Phi.

    lambda-reality means ``A_zbar = L conj(A_z) L^{-1} - (d_zbar L) L^{-1}``
    with ``L = exp(2 Omega) L0``.
    """
    inv = conn.model.involutions if involutions is None else involutions
    if inv.is_trivial_sigma():
        raise ValueError("sigma is the identity: no alternating sign pattern")
    grid = conn.grid
    L = conn.real_structure()
    Li = np.linalg.inv(L)
    om = conn.model.omega_matrix(conn.omega)
    dbar_om = np.moveaxis(grid.d_zbar(np.moveaxis(om, -1, 0), conn.deriv_order), 0, -1)
    dL_Li = np.zeros_like(conn.A_z)
    idx = np.arange(conn.n)
    dL_Li[..., idx, idx] = 2.0 * dbar_om
    pred = L @ np.conj(conn.A_z) @ Li - dL_Li
    mask = grid.interior_mask()
    lam_dev = float(np.abs((pred - conn.A_zbar)[mask]).max())
    phi, phistar = conn.higgs()
    sig = np.array([[inv.sigma(phi[i, j]) for j in range(grid.ny)] for i in range(grid.nx)])
    sig_dev = float(np.abs(sig + phi).max())
    report = {"lambda_reality": lam_dev, "sigma_anti": sig_dev}
    if conn.model.bilinear is not None:
        B = conn.model.bilinear
        skew = np.abs(np.swapaxes(phi, -1, -2) @ B + B @ phi).max()
        skew_star = np.abs(np.swapaxes(phistar, -1, -2) @ B + B @ phistar).max()
        report["preserves_form"] = float(max(skew, skew_star))
    if conn.model.algebra == "g2":
        Bm = octonion.g2_basis_map()
        Bi = np.linalg.inv(Bm)
        report["g2_derivation"] = float(
            max(octonion.derivation_defect(Bm @ X @ Bi) for X in (phi.reshape(-1, 7, 7)[0], phistar.reshape(-1, 7, 7)[0]))
        )
    return report


# ---------------------------------------------------------------------------
# invariant polynomials
# ---------------------------------------------------------------------------


def pfaffian(M: np.ndarray) -> complex:
    """Pfaffian of a skew-symmetric matrix by pivoted Gaussian elimination."""
    A = np.array(M, dtype=complex)
    n = A.shape[0]
    if n % 2:
        return 0.0
    result = 1.0 + 0j
    for k in range(0, n - 1, 2):
        piv = k + 1 + int(np.argmax(np.abs(A[k, k + 1 :])))
        if piv != k + 1:
            A[[k + 1, piv]] = A[[piv, k + 1]]
            A[:, [k + 1, piv]] = A[:, [piv, k + 1]]
            result = -result
        if A[k, k + 1] == 0:
            return 0.0
        result *= A[k, k + 1]
        if k + 2 < n:
            tau = A[k, k + 2 :] / A[k, k + 1]
            A[k + 2 :, k + 2 :] += np.outer(A[k + 1, k + 2 :], tau) - np.outer(tau, A[k + 1, k + 2 :])
    return complex(result)


def top_invariant(model: RepresentationModel, phi: np.ndarray) -> np.ndarray:
    """The invariant polynomial carrying the top differential.

    For the even orthogonal family this is Pf(B Phi) (degree r + 1); for the
    other representations it is tr(Phi^{M+1}).  Works on stacks of matrices.
    """
    flat = phi.reshape(-1, model.n, model.n)
    if model.algebra == "so" and model.rep.params.get("parity") == "even":
        B = model.bilinear
        vals = np.array([pfaffian(B @ P) for P in flat])
    else:
        k = model.rep.M + 1
        vals = np.array([np.trace(np.linalg.matrix_power(P, k)) for P in flat])
    return vals.reshape(phi.shape[:-2])


def invariant_defect(model: RepresentationModel, qs: np.ndarray) -> dict[str, float]:
    """Recover q from the top invariant of Phi(q) and check that the lower
    power traces vanish.  The invariant is linear in q; its constant is
    calibrated at q = 1."""
    phi = model.phi(qs)
    scale = top_invariant(model, model.phi(np.array(1.0)))
    rec = top_invariant(model, phi) / scale
    lower = 0.0
    top = model.rep.M + 1
    for k in range(1, top):
        tr = np.einsum("...ii->...", np.linalg.matrix_power(phi, k))
        lower = max(lower, float(np.abs(tr).max()))
    return {"q_recovery": float(np.abs(rec - qs).max()), "lower_traces": lower, "scale": complex(scale)}


# ---------------------------------------------------------------------------
# Lie algebra bases for random testing
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _g2_basis() -> tuple[np.ndarray, ...]:
    """Basis of g2 in the e_3..e_{-3} frame from the stabilizer of phi."""
    Bm = octonion.g2_basis_map()
    Bi = np.linalg.inv(Bm)
    phi = octonion.phi_tensor()
    G = np.diag([1.0, 1, 1, -1, -1, -1, -1])
    rows = []
    n = 7
    for a in range(n):
        for b in range(a, n):
            row = np.zeros(n * n)
            row[n * b + a] += G[b, b]
            row[n * a + b] += G[a, a]
            rows.append(row)
    import itertools

    for a, b, c in itertools.combinations(range(n), 3):
        row = np.zeros(n * n)
        for d in range(n):
            row[n * d + a] += phi[d, b, c]
            row[n * d + b] += phi[a, d, c]
            row[n * d + c] += phi[a, b, d]
        rows.append(row)
    _, s, vt = np.linalg.svd(np.array(rows))
    null = vt[np.sum(s > 1e-10) :]
    return tuple(Bi @ v.reshape(n, n) @ Bm for v in null)


def lie_algebra_basis(model: RepresentationModel) -> list[np.ndarray]:
    """A complex basis of the Lie algebra the model's matrices live in."""
    n = model.n
    if model.algebra == "g2":
        return list(_g2_basis())
    mats = []
    for i in range(n):
        for j in range(n):
            m = np.zeros((n, n), complex)
            m[i, j] = 1.0
            mats.append(m)
    if model.algebra == "sl":
        out = [m for m in mats if m.trace() == 0]
        out += [np.diag(np.eye(n)[k] - np.eye(n)[k + 1]).astype(complex) for k in range(n - 1)]
        return out
    B = model.bilinear
    Bi = np.linalg.inv(B)
    proj = [0.5 * (m - Bi @ m.T @ B) for m in mats]
    _, s, vt = np.linalg.svd(np.array([p.ravel() for p in proj]))
    rank = int(np.sum(s > 1e-10))
    return [v.reshape(n, n) for v in vt[:rank].conj()]


def random_algebra_elements(model: RepresentationModel, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    basis = lie_algebra_basis(model)
    out = []
    for _ in range(count):
        c = rng.normal(size=len(basis)) + 1j * rng.normal(size=len(basis))
        out.append(sum(ci * b for ci, b in zip(c, basis)))
    return out

