"""Translation-invariant reduction of the Higgs data and its Lax pair.

For fields that do not depend on y the flatness equations collapse to the
Schmid system

    A'   = [phi1, phi2]
    phi1' = [A, phi2]
    phi2' = [phi1, A]

which is integrated here with fixed-step classical RK4.  The Lax matrix

    alpha(zeta) = (phi1 + i phi2) + 2 zeta A + zeta^2 (phi1 - i phi2)

has an x-independent characteristic polynomial ``det(eta - alpha(zeta))``,
the spectral curve, whose coefficients are used as conserved quantities.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .gauge import RepresentationModel
from .toda import HoloDifferential, ScalarField2D, _diff

__all__ = [
    "NahmState",
    "NahmBlowupError",
    "RankDeficientError",
    "Trajectory",
    "SpectralCurve",
    "schmid_rhs",
    "integrate",
    "lax_matrix",
    "lax_beta",
    "characteristic_coefficients",
    "spectral_curve",
    "trace_invariants",
    "curve_drift",
    "su2_triple",
    "su2_period_oracle",
    "return_period",
    "random_traceless_state",
    "toda_line_states",
    "toda_line_consistency",
    "write_trajectory_csv",
    "write_curve_csv",
]

BLOWUP_NORM = 1e8


class NahmBlowupError(FloatingPointError):
    """The state norm exceeded :data:`BLOWUP_NORM`.

    ``x_blowup`` extrapolates the pole position assuming the norm grows like
    ``c / (x* - x)``, which is the generic behaviour of a quadratic ODE.
    """

    def __init__(self, x: float, norm: float, x_blowup: float, trajectory: "Trajectory"):
        super().__init__(f"state norm {norm:.3e} at x = {x:.6g}; estimated blow-up near x = {x_blowup:.6g}")
        self.x = x
        self.norm = norm
        self.x_blowup = x_blowup
        self.trajectory = trajectory


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class NahmState:
    A: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    x: float = 0.0

    def __post_init__(self) -> None:
        mats = [np.asarray(m) for m in (self.A, self.phi1, self.phi2)]
        shapes = {m.shape for m in mats}
        if len(shapes) != 1:
            raise ValueError(f"size mismatch between A, phi1, phi2: {sorted(shapes)}")
        (shape,) = shapes
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError(f"expected square matrices, got shape {shape}")
        for name, m in zip(("A", "phi1", "phi2"), mats):
            object.__setattr__(self, name, m.astype(complex))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def stack(self) -> np.ndarray:
        return np.stack([self.A, self.phi1, self.phi2])

    @classmethod
    def from_stack(cls, arr: np.ndarray, x: float = 0.0) -> NahmState:
        return cls(arr[0], arr[1], arr[2], x)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.stack()) ** 2)))

    def traces(self) -> np.ndarray:
        return np.array([np.trace(m) for m in (self.A, self.phi1, self.phi2)])


def _comm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def _rhs_stack(s: np.ndarray) -> np.ndarray:
    A, p1, p2 = s
    return np.stack([_comm(p1, p2), _comm(A, p2), _comm(p1, A)])


def schmid_rhs(state: NahmState) -> NahmState:
    """Derivative (A', phi1', phi2') as a state at the same x."""
    return NahmState.from_stack(_rhs_stack(state.stack()), state.x)


@dataclass
class Trajectory:
    xs: np.ndarray
    states: np.ndarray  # (steps + 1, 3, n, n)
    step: float
    monitor: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.xs)

    def state(self, k: int) -> NahmState:
        return NahmState.from_stack(self.states[k], float(self.xs[k]))

    @property
    def final(self) -> NahmState:
        return self.state(len(self) - 1)

    def trace_drift(self) -> float:
        tr = np.trace(self.states, axis1=-2, axis2=-1)
        return float(np.abs(tr - tr[0]).max())


def _rk4(s: np.ndarray, h: float) -> np.ndarray:
    k1 = _rhs_stack(s)
    k2 = _rhs_stack(s + 0.5 * h * k1)
    k3 = _rhs_stack(s + 0.5 * h * k2)
    k4 = _rhs_stack(s + h * k3)
    return s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(
    state0: NahmState,
    x_span: float,
    step: float,
    monitor_every: int = 0,
    zeta_samples: Sequence[complex] | None = None,
) -> Trajectory:
    """Classical RK4 over ``[x0, x0 + x_span]`` (negative span integrates
    backwards) with a fixed step of size ``step``.

    The number of steps is ``round(|x_span| / step)``; the last step is
    shortened or stretched so the end point is hit exactly.  With
    ``monitor_every > 0`` the spectral curve is recomputed every that many
    steps and its coefficient drift is stored in ``monitor``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    nsteps = max(1, int(round(abs(x_span) / step)))
    h = x_span / nsteps
    n = state0.n
    states = np.empty((nsteps + 1, 3, n, n), dtype=complex)
    states[0] = state0.stack()
    xs = state0.x + h * np.arange(nsteps + 1)
    drift = 0.0
    ref = spectral_curve(state0, zeta_samples) if monitor_every else None
    prev_norm = state0.norm()
    for k in range(nsteps):
        states[k + 1] = _rk4(states[k], h)
        nrm = float(np.sqrt(np.sum(np.abs(states[k + 1]) ** 2)))
        if not math.isfinite(nrm) or nrm > BLOWUP_NORM:
            growth = (nrm - prev_norm) / abs(h) if math.isfinite(nrm) else math.inf
            ahead = nrm / growth if growth > 0 and math.isfinite(growth) else 0.0
            x_star = float(xs[k + 1] + math.copysign(ahead, h))
            traj = Trajectory(xs[: k + 2].copy(), states[: k + 2].copy(), abs(h))
            raise NahmBlowupError(float(xs[k + 1]), nrm, x_star, traj)
        prev_norm = nrm
        if monitor_every and (k + 1) % monitor_every == 0:
            cur = spectral_curve(NahmState.from_stack(states[k + 1]), zeta_samples)
            drift = max(drift, ref.distance(cur))
    traj = Trajectory(xs, states, abs(h))
    traj.monitor["trace_drift"] = traj.trace_drift()
    if monitor_every:
        traj.monitor["curve_drift"] = drift
    return traj


# ---------------------------------------------------------------------------
# Lax pair and spectral curve
# ---------------------------------------------------------------------------


def lax_matrix(state: NahmState, zeta: complex | np.ndarray) -> np.ndarray:
    """alpha(zeta); array-valued zeta gives a stack of matrices."""
    z = np.asarray(zeta, dtype=complex)[..., None, None]
    plus = state.phi1 + 1j * state.phi2
    minus = state.phi1 - 1j * state.phi2
    return plus + 2 * z * state.A + z**2 * minus


def lax_beta(state: NahmState, zeta: complex | np.ndarray) -> np.ndarray:
    z = np.asarray(zeta, dtype=complex)[..., None, None]
    return 1j * state.A + 1j * z * (state.phi1 - 1j * state.phi2)


def characteristic_coefficients(M: np.ndarray) -> np.ndarray:
    """Coefficients ``p_0 = 1, p_1, ..., p_n`` with
    ``det(eta - M) = sum_m p_m eta^(n-m)``, by Faddeev-LeVerrier.

    Works on stacks ``(..., n, n)``; the result has shape ``(..., n + 1)``.
    """
    M = np.asarray(M, dtype=complex)
    n = M.shape[-1]
    eye = np.broadcast_to(np.eye(n), M.shape)
    out = np.zeros(M.shape[:-2] + (n + 1,), dtype=complex)
    out[..., 0] = 1.0
    N = np.zeros_like(M)
    for m in range(1, n + 1):
        N = M @ (N + out[..., m - 1, None, None] * eye)
        out[..., m] = -np.trace(N, axis1=-2, axis2=-1) / m
    return out


def default_zeta_samples(n: int, radius: float = 1.0) -> np.ndarray:
    """2n + 1 points on a circle, which makes the interpolation a DFT."""
    K = 2 * n + 1
    return radius * np.exp(2j * np.pi * np.arange(K) / K)


def _fit_in_zeta(zetas: np.ndarray, values: np.ndarray, degree: int) -> np.ndarray:
    V = np.vander(zetas, degree + 1, increasing=True)
    rank = np.linalg.matrix_rank(V)
    if rank < degree + 1:
        raise RankDeficientError(
            f"interpolation in zeta needs {degree + 1} distinct samples, Vandermonde rank is {rank}"
        )
    coef, *_ = np.linalg.lstsq(V, values, rcond=None)
    return coef


@dataclass(frozen=True)
class SpectralCurve:
    """``coeffs[j, k]`` multiplies ``eta^j zeta^k`` in ``det(eta - alpha(zeta))``."""

    coeffs: np.ndarray

    @property
    def n(self) -> int:
        return self.coeffs.shape[0] - 1

    def __call__(self, eta: complex, zeta: complex) -> complex:
        j = np.arange(self.n + 1)[:, None]
        k = np.arange(self.coeffs.shape[1])[None, :]
        return complex(np.sum(self.coeffs * eta**j * zeta**k))

    def degree_defect(self) -> float:
        """Largest coefficient outside the O(2) pattern, where eta^(n-m)
        may only carry zeta powers up to 2m."""
        worst = 0.0
        for j in range(self.n + 1):
            allowed = 2 * (self.n - j)
            if allowed + 1 < self.coeffs.shape[1]:
                worst = max(worst, float(np.abs(self.coeffs[j, allowed + 1 :]).max()))
        return worst

    def distance(self, other: SpectralCurve) -> float:
        return float(np.abs(self.coeffs - other.coeffs).max())

    def to_json(self) -> dict:
        return {"n": self.n, "re": self.coeffs.real.tolist(), "im": self.coeffs.imag.tolist()}


def spectral_curve(state: NahmState, zeta_samples: Sequence[complex] | None = None) -> SpectralCurve:
    n = state.n
    zetas = default_zeta_samples(n) if zeta_samples is None else np.asarray(zeta_samples, dtype=complex)
    if zetas.size < 2 * n + 1:
        raise RankDeficientError(f"need at least {2 * n + 1} zeta samples, got {zetas.size}")
    p = characteristic_coefficients(lax_matrix(state, zetas))  # (K, n + 1)
    fit = _fit_in_zeta(zetas, p, 2 * n)  # (2n + 1, n + 1): fit[k, m] for p_m
    coeffs = np.zeros((n + 1, 2 * n + 1), dtype=complex)
    for m in range(n + 1):
        coeffs[n - m] = fit[:, m]
    return SpectralCurve(coeffs)


def trace_invariants(state: NahmState, kmax: int | None = None, zeta_samples: Sequence[complex] | None = None) -> np.ndarray:
    """Polynomial coefficients in zeta of tr(alpha^k), k = 1..kmax.

    Row ``k - 1`` holds the 2k + 1 coefficients of tr(alpha^k), padded.
    """
    n = state.n
    kmax = n if kmax is None else kmax
    zetas = default_zeta_samples(kmax) if zeta_samples is None else np.asarray(zeta_samples, dtype=complex)
    alpha = lax_matrix(state, zetas)
    out = np.zeros((kmax, 2 * kmax + 1), dtype=complex)
    power = np.broadcast_to(np.eye(n), alpha.shape).astype(complex)
    for k in range(1, kmax + 1):
        power = power @ alpha
        tr = np.trace(power, axis1=-2, axis2=-1)
        out[k - 1, : 2 * k + 1] = _fit_in_zeta(zetas, tr, 2 * k)
    return out


def curve_drift(traj: Trajectory, every: int = 1, zeta_samples: Sequence[complex] | None = None) -> dict[str, float]:
    """Max change of the spectral-curve and trace-invariant coefficients
    relative to the first state, sampled every ``every`` steps."""
    ref = traj.state(0)
    c0 = spectral_curve(ref, zeta_samples)
    t0 = trace_invariants(ref)
    out = {"curve": 0.0, "traces": 0.0, "scale": float(np.abs(c0.coeffs).max())}
    for k in range(0, len(traj), every):
        s = traj.state(k)
        out["curve"] = max(out["curve"], c0.distance(spectral_curve(s, zeta_samples)))
        out["traces"] = max(out["traces"], float(np.abs(trace_invariants(s) - t0).max()))
    return out


# ---------------------------------------------------------------------------
# test data
# ---------------------------------------------------------------------------

_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def su2_triple(a: float, b: float, c: float) -> NahmState:
    """A = a i sigma3, phi1 = b i sigma1, phi2 = c i sigma2.

    The span is preserved by the flow and the coefficients obey
    a' = -2bc, b' = 2ac, c' = 2ab, so a^2 + b^2 and a^2 + c^2 are
    conserved and every orbit with bc != 0 is periodic.
    """
    s1, s2, s3 = _PAULI
    return NahmState(1j * a * s3, 1j * b * s1, 1j * c * s2)


def su2_coefficients(state: NahmState) -> tuple[float, float, float]:
    s1, s2, s3 = _PAULI
    a = np.trace(state.A @ s3).imag / 2
    b = np.trace(state.phi1 @ s1).imag / 2
    c = np.trace(state.phi2 @ s2).imag / 2
    return float(a), float(b), float(c)


def su2_period_oracle(a: float, b: float, c: float) -> float:
    """Exact period of the su(2) triple via the complete elliptic integral.

    With P = a^2 + b^2 and Q = a^2 + c^2 the coefficient a satisfies
    a'^2 = 4 (P - a^2)(Q - a^2).  The orbit closes after a makes one full
    oscillation, so the period is 2 K(m) / sqrt(max(P, Q)) with
    m = min(P, Q) / max(P, Q).
    """
    from scipy.special import ellipk

    P, Q = a * a + b * b, a * a + c * c
    lo, hi = min(P, Q), max(P, Q)
    if lo <= 0 or lo == hi:
        raise ValueError("oracle needs 0 < min(P, Q) < max(P, Q)")
    return float(2 * ellipk(lo / hi) / math.sqrt(hi))


def return_period(traj: Trajectory, observable: Callable[[np.ndarray], float]) -> float:
    """First return time of a linear observable of the stacked state to its
    initial value, crossing in the same direction.

    Crossings are located with cubic Hermite interpolation; the slopes
    are the observable applied to the exact right-hand side, so the
    estimate inherits the O(step^4) accuracy of the samples.
    """
    g = np.array([observable(s) for s in traj.states]) - observable(traj.states[0])
    dg = np.array([observable(_rhs_stack(s)) for s in traj.states])
    direction = np.sign(dg[0])
    if direction == 0:
        raise ValueError("observable is stationary at the start")
    h = traj.xs[1] - traj.xs[0]
    # skip the neighbourhood of the start
    start = 2
    for k in range(start, len(g) - 1):
        if g[k] * g[k + 1] <= 0 and g[k] != g[k + 1] and np.sign(dg[k]) == direction:
            # Newton on the Hermite cubic in s in [0, 1]
            p0, p1, m0, m1 = g[k], g[k + 1], dg[k] * h, dg[k + 1] * h
            s = p0 / (p0 - p1)
            for _ in range(50):
                h00 = 2 * s**3 - 3 * s**2 + 1
                h10 = s**3 - 2 * s**2 + s
                h01 = -2 * s**3 + 3 * s**2
                h11 = s**3 - s**2
                val = h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1
                der = (6 * s**2 - 6 * s) * p0 + (3 * s**2 - 4 * s + 1) * m0 + (-6 * s**2 + 6 * s) * p1 + (3 * s**2 - 2 * s) * m1
                ds = val / der
                s -= ds
                if abs(ds) < 1e-15:
                    break
            return float(traj.xs[k] + s * h - traj.xs[0])
    raise ValueError("no return crossing inside the trajectory")


def random_traceless_state(n: int, rng: np.random.Generator, scale: float = 0.3, real_form: str = "compact") -> NahmState:
    """Random trace-free triple.

    ``real_form="compact"`` draws all three matrices in su(n).  The flow
    preserves this form, and because alpha(+-1) and alpha(+-i) are then
    normal matrices with conserved spectra, ``|phi1 +- A|`` and
    ``|phi2 +- A|`` are conserved, so orbits stay bounded.
    ``"higgs"`` draws A anti-Hermitian and phi1, phi2 Hermitian, the form
    produced by y-invariant Higgs data; orbits of this form typically reach
    a pole at finite x.  ``"complex"`` draws unconstrained matrices.
    """

    def draw() -> np.ndarray:
        M = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        return M - np.trace(M) / n * np.eye(n)

    mats = [draw() for _ in range(3)]
    if real_form in ("higgs", "compact"):
        herm = [(M + M.conj().T) / 2 for M in mats]
        mats = [1j * herm[0], herm[1], herm[2]] if real_form == "higgs" else [1j * M for M in herm]
    elif real_form != "complex":
        raise ValueError(f"unknown real form {real_form!r}")
    return NahmState(*(scale * M for M in mats))


# ---------------------------------------------------------------------------
# extraction from y-invariant Toda fields
# ---------------------------------------------------------------------------


def toda_line_states(
    model: RepresentationModel,
    omega: ScalarField2D,
    q: HoloDifferential | complex,
    iy: int = 0,
    order: int = 4,
) -> list[NahmState]:
    """Schmid data along the grid line ``y = y[iy]``.

    After the diagonal gauge change by exp(Omega) the flat connection reads
    ``-i Omega_x dy + Phi_u dz + Phi_s dzbar`` for y-invariant Omega, with
    ``Phi_u = exp(-Omega) Phi exp(Omega)`` and
    ``Phi_s = exp(Omega) lambda_hat(Phi) exp(-Omega)``.  Matching with
    ``A dy + (phi1 + i phi2)/2 dz + (phi1 - i phi2)/2 dzbar`` gives
    ``A = -i Omega_x``, ``phi1 = Phi_u + Phi_s`` and
    ``phi2 = -i (Phi_u - Phi_s)``.
    """
    grid = omega.grid
    qv = q if isinstance(q, HoloDifferential) else HoloDifferential.constant(model.rep.M + 1, q)
    if not qv.is_constant:
        raise ValueError("toda line extraction needs a constant differential")
    d = model.omega_matrix(omega.values)[:, iy].real  # (nx, n)
    dx = _diff(omega.values[:, :, iy], grid.dx, axis=1, periodic=grid.topology == "torus", order=order)
    ddiag = np.tensordot(dx.T, model.channel_diagonals, axes=(-1, 0))
    Phi = model.phi(complex(qv.coeffs[0]))
    lam = model.involutions.lambda_hat(Phi)
    out = []
    for ix in range(grid.nx):
        e = np.exp(d[ix])
        Pu = (Phi * e[None, :]) / e[:, None]
        Ps = (lam * e[:, None]) / e[None, :]
        A = -1j * np.diag(ddiag[ix])
        out.append(NahmState(A, Pu + Ps, -1j * (Pu - Ps), float(grid.x[ix])))
    return out


def toda_line_consistency(states: Sequence[NahmState], skip: int = 2) -> float:
    """Max difference between the central x-difference of the extracted
    fields and :func:`schmid_rhs`, skipping ``skip`` nodes at each end."""
    xs = np.array([s.x for s in states])
    stacks = np.array([s.stack() for s in states])
    worst = 0.0
    for k in range(max(1, skip), len(states) - max(1, skip)):
        fd = (stacks[k + 1] - stacks[k - 1]) / (xs[k + 1] - xs[k - 1])
        worst = max(worst, float(np.abs(fd - _rhs_stack(stacks[k])).max()))
    return worst


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def write_trajectory_csv(path, traj: Trajectory, every: int = 1, sidecar: dict | None = None) -> None:
    """One row per sampled x with real and imaginary parts of every entry."""
    n = traj.states.shape[-1]
    header = ["x"]
    for name in ("A", "phi1", "phi2"):
        for i in range(n):
            for j in range(n):
                header += [f"{name}_{i}{j}_re", f"{name}_{i}{j}_im"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for k in range(0, len(traj), every):
            row = [repr(float(traj.xs[k]))]
            for v in traj.states[k].ravel():
                row += [repr(float(v.real)), repr(float(v.imag))]
            wr.writerow(row)
    if sidecar is not None:
        with open(f"{path}.json", "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)


def write_curve_csv(path, curve: SpectralCurve) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["eta_power", "zeta_power", "re", "im"])
        for j in range(curve.coeffs.shape[0]):
            for k in range(curve.coeffs.shape[1]):
                c = curve.coeffs[j, k]
                wr.writerow([j, k, repr(float(c.real)), repr(float(c.imag))])
