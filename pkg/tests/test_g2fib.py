from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semiflat import develop, gauge, toda
from semiflat import g2fib as G


def _levi4():
    eps = np.zeros((4,) * 4)
    for p in itertools.permutations(range(4)):
        inv = sum(p[i] > p[j] for i in range(4) for j in range(i + 1, 4))
        eps[p] = (-1) ** inv
    return eps


def _wedge_oracle(u, v):
    """dx^1234 coefficient of u ^ v from antisymmetric matrices and epsilon."""
    U, V = G.Wedge2Vector(tuple(u)).matrix(), G.Wedge2Vector(tuple(v)).matrix()
    return 0.25 * np.einsum("abcd,ab,cd->", _levi4(), U, V)


vec6 = st.lists(st.floats(-3, 3, allow_nan=False), min_size=6, max_size=6)


@settings(max_examples=50, deadline=None)
@given(vec6, vec6)
def test_wedge_pairing_matches_epsilon_oracle(u, v):
    assert G.wedge_pairing(np.array(u), np.array(v)) == pytest.approx(_wedge_oracle(u, v), abs=1e-12)
    assert G.Wedge2Vector(tuple(u)).pairing(G.Wedge2Vector(tuple(v))) == pytest.approx(
        G.Wedge2Vector(tuple(v)).pairing(G.Wedge2Vector(tuple(u)))
    )


def test_pairing_signature_and_dual_bases():
    ev = np.linalg.eigvalsh(G.PAIRING)
    assert np.sum(ev > 0) == 3 and np.sum(ev < 0) == 3
    assert np.array_equal(G.SELF_DUAL @ G.PAIRING @ G.SELF_DUAL.T, 2 * np.eye(3))
    assert np.array_equal(G.ANTI_SELF_DUAL @ G.PAIRING @ G.ANTI_SELF_DUAL.T, -2 * np.eye(3))
    assert np.array_equal(G.SELF_DUAL @ G.PAIRING @ G.ANTI_SELF_DUAL.T, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        G.Wedge2Vector((1.0, 2.0))


def test_isometry_to_wedge2():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(6, 6))
    gram = M.T @ np.diag([1, 1, 1, -1, -1, -1.0]) @ M
    J = G.isometry_to_wedge2(gram)
    assert np.abs(J.T @ G.PAIRING @ J - 2 * gram).max() < 1e-10 * np.abs(gram).max()
    with pytest.raises(ValueError):
        G.isometry_to_wedge2(np.eye(6))


def _box(n=9):
    return G.Grid3D.box((n, n, n), (0, 0, 0), (1, 1, 1))


def test_linear_field_is_flat_and_exact():
    grid = _box()
    f = G.ImmersionField3D(grid, G.linear_field(grid))
    h, sig = G.induced_metric(f)
    assert sig == (3, 0) and np.abs(h - np.eye(3)).max() == 0.0
    assert np.abs(G.tension_field(f)).max() == 0.0
    forms = G.assemble_g2_forms(f)
    assert forms.residuals() == {"dphi": 0.0, "dpsi": 0.0}
    assert forms.psi_fiber_coefficient() == 1.0
    B = G.seven_dim_metric(forms.phi_node((4, 4, 4)))
    assert np.abs(B - np.eye(7)).max() < 1e-12


def test_constant_field_is_degenerate():
    grid = _box(6)
    f = G.ImmersionField3D(grid, np.ones(grid.shape + (6,)))
    with pytest.raises(G.DegenerateMetricError) as info:
        G.induced_metric(f)
    assert len(info.value.nodes) == 6**3


def test_split_variant_signature():
    grid = _box()
    basis = np.array([G.SELF_DUAL[0], G.ANTI_SELF_DUAL[1], G.ANTI_SELF_DUAL[2]])
    f = G.ImmersionField3D(grid, G.linear_field(grid, basis), variant="split")
    h, sig = G.induced_metric(f)
    assert sig == (1, 2)
    assert np.abs(h - np.diag([1.0, -1, -1])).max() == 0.0
    forms = G.assemble_g2_forms(f)
    ev = np.linalg.eigvalsh(G.seven_dim_metric(forms.phi_node((4, 4, 4))))
    assert (np.sum(ev > 0), np.sum(ev < 0)) == (3, 4)
    # the compact variant refuses indefinite metrics
    with pytest.raises(G.DegenerateMetricError):
        G.assemble_g2_forms(G.ImmersionField3D(grid, f.u, variant="compact"))


def test_field_validation():
    grid = _box(5)
    with pytest.raises(ValueError):
        G.ImmersionField3D(grid, np.zeros((5, 5, 5, 5)))
    with pytest.raises(ValueError):
        G.ImmersionField3D(grid, np.zeros(grid.shape + (6,)), tau=0.0)
    with pytest.raises(ValueError):
        G.ImmersionField3D(grid, np.zeros(grid.shape + (6,)), variant="other")


def test_in_plane_reparametrization_has_no_tension():
    grid = _box(17)
    X, _, _ = grid.mesh()
    u = G.linear_field(grid) + 0.1 * (X**2)[..., None] * G.SELF_DUAL[0]
    f = G.ImmersionField3D(grid, u)
    assert np.abs(G.tension_field(f)).max() < 1e-13


def _perturbed(n, eps=0.1):
    grid = _box(n)
    X, _, _ = grid.mesh()
    u = G.linear_field(grid) + eps * (X**2)[..., None] * G.ANTI_SELF_DUAL[0]
    return G.ImmersionField3D(grid, u)


def _tension_oracle(x, eps):
    """Closed form for u = w.omega + eps x^2 nu with nu anti-self-dual:
    h_xx = 1 - 4 eps^2 x^2 and Gamma^x_xx = -4 eps^2 x / h_xx."""
    nu, om1 = G.ANTI_SELF_DUAL[0], G.SELF_DUAL[0]
    hxx = 1 - 4 * eps**2 * x**2
    gam = -4 * eps**2 * x / hxx
    du = om1 + 2 * eps * x[..., None] * nu
    return (2 * eps * nu - gam[..., None] * du) / hxx[..., None]


def test_out_of_plane_perturbation_matches_closed_form():
    eps = 0.1
    gaps = []
    for n in (17, 33):
        f = _perturbed(n, eps)
        forms = G.assemble_g2_forms(f)
        mask = f.grid.interior_mask(forms.margin)
        X, _, _ = f.grid.mesh()
        want = _tension_oracle(X, eps)
        assert np.abs(np.linalg.norm(want, axis=-1)).min() > 0.2
        assert np.abs(G.tension_field(f) - want)[mask].max() < 1e-12
        assert forms.residuals()["dphi"] < 1e-12
        # d psi reproduces the tension up to the O(h^2) error of the
        # divergence form
        gaps.append(float(np.abs(forms.dpsi - want)[mask].max()))
    assert gaps[0] < 1e-4
    assert 3.0 < gaps[0] / gaps[1] < 5.0


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(-0.3, 0.3, allow_nan=False), min_size=18, max_size=18))
def test_dphi_vanishes_for_smooth_fields(c):
    grid = _box(11)
    X, Y, Z = grid.mesh()
    c = np.array(c).reshape(3, 6)
    u = G.linear_field(grid) + np.sin(X + 2 * Y)[..., None] * c[0] + (Y * Z)[..., None] * c[1] + np.cos(Z * X)[..., None] * c[2]
    f = G.ImmersionField3D(grid, u)
    try:
        forms = G.assemble_g2_forms(f)
    except G.DegenerateMetricError:
        return
    assert forms.residuals()["dphi"] < 1e-11


def _d23_surface(n, L=0.25):
    s = toda.d23_superconformal_system(1.0)
    g = toda.Grid2D.from_extent(n, n, L, L, "rectangle", x0=-L / 2, y0=-L / 2)
    pw = toda.plane_wave_solution(s, g, beta=0.3)
    X, Y = g.mesh()
    bump = np.sin(np.pi * (X / L + 0.5)) * np.sin(np.pi * (Y / L + 0.5))
    sol = toda.solve_newton(s, pw.copy(pw.values + 0.1 * bump), tol=1e-11, order=4)
    return develop.develop_immersion(gauge.assemble_connection(s, sol, order=4))


def test_cone_over_d23_surface():
    out = []
    for n in (17, 33):
        imm = _d23_surface(n)
        cone = G.cone_extend(imm, np.linspace(1.0, 1.25, n))
        forms = G.assemble_g2_forms(cone)
        mask = cone.grid.interior_mask(forms.margin)
        tn = float(np.linalg.norm(G.tension_field(cone), axis=-1)[mask].max())
        out.append((tn, forms.residuals()["dpsi"]))
        assert G.cone_metric_defect(imm, cone) < 1e-6
        assert G.induced_metric(cone)[1] == (3, 0)
    assert out[1][0] < 1e-3 and out[1][1] < 1e-3
    assert 3.0 < out[0][0] / out[1][0] < 5.0
    assert 3.0 < out[0][1] / out[1][1] < 5.0


def test_cone_tension_radial_scaling():
    imm = _d23_surface(17)
    r1 = np.linspace(1.0, 1.25, 9)
    t0a, tga = G.cone_tension_components(G.cone_extend(imm, r1))
    t0b, tgb = G.cone_tension_components(G.cone_extend(imm, 2 * r1))
    scale = np.abs(tga).max() * r1[-1] ** 2
    # components along the link scale like 1/r^2, the radial one like 1/r
    assert np.abs(4 * tgb - tga).max() < 1e-6 * scale
    assert np.abs(2 * t0b - t0a).max() < 1e-6 * max(np.abs(t0a).max(), scale)
    r = r1[None, None, :, None]
    v = tga * r**2
    assert np.abs(v - v[:, :, :1]).max() < 1e-6 * scale


def test_cone_rejections():
    imm = _d23_surface(9)
    with pytest.raises(ValueError):
        G.cone_extend(imm, np.linspace(1, 2, 5), variant="split")
    with pytest.raises(ValueError):
        G.cone_extend(imm, [1.0, 1.1, 1.5])
    with pytest.raises(ValueError):
        G.cone_extend(imm, [0.0, 0.5, 1.0])
    const = develop.ImmersionSample(imm.grid, np.broadcast_to(imm.points[4, 4], imm.points.shape).copy(), imm.gram, 1.0, 0, (3, 3))
    with pytest.raises(G.DegenerateMetricError):
        G.cone_extend(const, np.linspace(1, 2, 5))


def _ma_grid(n=17, lo=-1.0, hi=1.0):
    grid = G.Grid3D.box((n, n, n), (lo,) * 3, (hi,) * 3)
    return grid, grid.mesh()


def test_monge_ampere_constant_hessians():
    grid, (U1, U2, U3) = _ma_grid()
    r = G.monge_ampere_check(0.5 * (U1**2 + U2**2 + U3**2), grid, order=2)
    assert r["det_derivative"] == 0.0 and r["contraction"] == 0.0
    grid, (U1, U2, U3) = _ma_grid(21, -0.1, 0.1)
    r = G.monge_ampere_check(0.5 * (2 * U1**2 + 0.5 * U2**2 + U3**2), grid)
    assert r["det_derivative"] < 1e-10 and r["contraction"] < 1e-10
    assert r["det_range"][0] == pytest.approx(1.0) and r["det_range"][1] == pytest.approx(1.0)


@pytest.mark.parametrize("eps", [1e-2, 1e-3])
def test_monge_ampere_perturbation_obeys_jacobi(eps):
    grid, (U1, U2, U3) = _ma_grid(21, -0.1, 0.1)
    pot = 0.5 * (U1**2 + U2**2 + U3**2) + eps * (U1**4 + U1 * U2**3 + U3**4)
    r = G.monge_ampere_check(pot, grid)
    assert r["det_derivative"] > eps and r["contraction"] > eps
    assert r["jacobi_relative"] < 1e-6


def test_monge_ampere_errors():
    grid, (U1, U2, U3) = _ma_grid(9)
    with pytest.raises(ValueError):
        G.monge_ampere_check(0.5 * (U1**2 - U2**2 + U3**2), grid, order=2)
    with pytest.raises(ValueError):
        G.monge_ampere_check(U1, grid, order=4)
    with pytest.raises(ValueError):
        G.monge_ampere_check(np.zeros((3, 3, 3)), grid)


def test_elliptic_affine_sphere_reduction():
    q = toda.HoloDifferential.constant(3, 1.0)
    g = toda.Grid2D.from_extent(32, 32, 0.25, 0.25, "rectangle", x0=-0.125, y0=-0.125)
    se = G.elliptic_affine_system(q)
    pw = toda.plane_wave_solution(se, g, beta=0.2, w0=[0.1])
    X, Y = g.mesh()
    bump = np.sin(np.pi * (X / 0.25 + 0.5)) * np.sin(np.pi * (Y / 0.25 + 0.5))
    sol = toda.solve_newton(se, pw.copy(pw.values + 0.05 * bump), tol=1e-12)
    r = G.reduction_residuals(sol, q)
    assert r["elliptic"] < 1e-10 and r["d23"] < 1e-8
    w = G.elliptic_to_d23(sol, q)
    assert np.allclose(np.exp(2 * w.values[1]), 1.0 / np.exp(2 * w.values[0]))


def test_u_csv_round_trip(tmp_path):
    f = _perturbed(5)
    f = G.ImmersionField3D(f.grid, f.u, tau=2.5, variant="compact")
    G.write_u_csv(tmp_path / "u.csv", f)
    back = G.read_u_csv(tmp_path / "u.csv")
    assert back.grid == f.grid and back.tau == 2.5 and back.variant == "compact"
    assert np.array_equal(back.u, f.u)
