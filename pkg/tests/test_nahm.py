from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semiflat import gauge, toda
from semiflat import nahm as N


def _comm(a, b):
    return a @ b - b @ a


def test_state_validation():
    with pytest.raises(ValueError):
        N.NahmState(np.zeros((2, 2)), np.zeros((3, 3)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        N.NahmState(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 3)))


def test_schmid_rhs_examples():
    z = np.zeros((3, 3))
    d = N.schmid_rhs(N.NahmState(z, z, z))
    assert np.abs(d.stack()).max() == 0.0
    p1, p2 = np.diag([1.0, 2.0, -3.0]), np.diag([0.5, -0.5, 0.0])
    d = N.schmid_rhs(N.NahmState(z, p1, p2))
    assert np.abs(d.stack()).max() == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["compact", "higgs", "complex"]))
def test_schmid_rhs_is_commutators_and_traceless(seed, form):
    s = N.random_traceless_state(2, np.random.default_rng(seed), real_form=form)
    d = N.schmid_rhs(s)
    assert np.array_equal(d.A, _comm(s.phi1, s.phi2))
    assert np.array_equal(d.phi1, _comm(s.A, s.phi2))
    assert np.array_equal(d.phi2, _comm(s.phi1, s.A))
    assert np.abs(d.traces()).max() < 1e-15


def test_stationary_trajectory():
    z = np.zeros((2, 2), complex)
    s = N.NahmState(z, np.diag([1.0, -1.0]).astype(complex), np.diag([2.0, -2.0]).astype(complex))
    traj = N.integrate(s, 5.0, 0.01)
    assert np.abs(traj.states - s.stack()).max() < 1e-12
    assert len(traj) == 501 and traj.xs[-1] == pytest.approx(5.0)


def test_step_must_be_positive():
    s = N.su2_triple(0.1, 0.2, 0.3)
    with pytest.raises(ValueError):
        N.integrate(s, 1.0, 0.0)


@pytest.mark.parametrize("n", [2, 3])
def test_reversibility(n):
    s = N.random_traceless_state(n, np.random.default_rng(n))
    fwd = N.integrate(s, 3.0, 1e-3)
    back = N.integrate(fwd.final, -3.0, 1e-3)
    assert back.xs[-1] == pytest.approx(0.0, abs=1e-12)
    assert np.abs(back.final.stack() - s.stack()).max() < 1e-8


def test_su2_triple_reduces_to_euler_system():
    a, b, c = 0.3, 0.5, 0.8
    d = N.schmid_rhs(N.su2_triple(a, b, c))
    assert np.allclose(N.su2_coefficients(d), (-2 * b * c, 2 * a * c, 2 * a * b))


def test_su2_period_converges_at_fourth_order():
    a, b, c = 0.3, 0.5, 0.8
    T = N.su2_period_oracle(a, b, c)
    obs = lambda st: st[0, 0, 0].imag  # noqa: E731
    errs = []
    for h in (0.04, 0.02, 0.01):
        traj = N.integrate(N.su2_triple(a, b, c), 1.3 * T, h)
        errs.append(abs(N.return_period(traj, obs) - T))
    assert errs[-1] < 1e-8
    assert 12 < errs[0] / errs[1] < 20 and 12 < errs[1] / errs[2] < 20


def test_lax_equation_holds():
    s = N.random_traceless_state(3, np.random.default_rng(0), real_form="complex")
    d = N.schmid_rhs(s)
    for zeta in (0.3 + 0.2j, -1.1, 2j):
        al, be = N.lax_matrix(s, zeta), N.lax_beta(s, zeta)
        dal = (d.phi1 + 1j * d.phi2) + 2 * zeta * d.A + zeta**2 * (d.phi1 - 1j * d.phi2)
        assert np.abs(dal - _comm(al, be)).max() < 1e-14


def test_characteristic_coefficients_match_numpy_poly():
    M = np.random.default_rng(1).normal(size=(4, 4)) + 1j * np.random.default_rng(2).normal(size=(4, 4))
    assert np.allclose(N.characteristic_coefficients(M), np.poly(M))


def test_curve_of_nilpotent_state():
    z = np.zeros((2, 2), complex)
    s = N.NahmState(z, np.array([[0, 1], [0, 0]], complex), z)
    c = N.spectral_curve(s)
    want = np.zeros_like(c.coeffs)
    want[2, 0] = 1.0
    assert np.abs(c.coeffs - want).max() < 1e-14


def test_curve_of_diagonal_state():
    z = np.zeros((2, 2), complex)
    s = N.NahmState(z, np.diag([1.0, -1.0]).astype(complex), z)
    c = N.spectral_curve(s)
    # eta^2 - (1 + zeta^2)^2
    want = np.zeros_like(c.coeffs)
    want[2, 0] = 1.0
    want[0, 0], want[0, 2], want[0, 4] = -1.0, -2.0, -1.0
    assert np.abs(c.coeffs - want).max() < 1e-13
    assert c(1 + 1j, 1j) == pytest.approx((1 + 1j) ** 2)
    assert c.degree_defect() < 1e-13
    js = c.to_json()
    assert json.loads(json.dumps(js)) == js


def test_rank_deficient_samples():
    s = N.su2_triple(0.1, 0.2, 0.3)
    with pytest.raises(N.RankDeficientError):
        N.spectral_curve(s, [0.5, 0.5, 0.5, 0.5, 0.5])
    with pytest.raises(N.RankDeficientError):
        N.spectral_curve(s, [0.1, 0.2, 0.3])


@pytest.mark.parametrize("n", [2, 3])
def test_spectral_curve_is_conserved(n):
    s = N.random_traceless_state(n, np.random.default_rng(10 + n))
    traj = N.integrate(s, 2.0, 1e-3, monitor_every=250)
    drift = N.curve_drift(traj, every=100)
    assert drift["curve"] < 1e-8 and drift["traces"] < 1e-8
    assert traj.monitor["curve_drift"] < 1e-8
    assert traj.trace_drift() < 1e-12


def test_trace_invariants_are_polynomials_in_zeta():
    s = N.random_traceless_state(3, np.random.default_rng(4), real_form="complex")
    inv = N.trace_invariants(s)
    zeta = 0.7 - 0.2j
    al = N.lax_matrix(s, zeta)
    for k in range(1, 4):
        val = np.polyval(inv[k - 1][::-1], zeta)
        assert val == pytest.approx(np.trace(np.linalg.matrix_power(al, k)), abs=1e-12)


def test_higgs_real_form_blows_up():
    s = N.random_traceless_state(2, np.random.default_rng(0), scale=1.0, real_form="higgs")
    with pytest.raises(N.NahmBlowupError) as info:
        N.integrate(s, 20.0, 1e-3)
    err = info.value
    assert err.norm > N.BLOWUP_NORM or not np.isfinite(err.norm)
    assert err.x_blowup >= err.x > 0
    assert len(err.trajectory) >= 2


def test_random_state_forms():
    rng = np.random.default_rng(3)
    s = N.random_traceless_state(3, rng, real_form="compact")
    for M in (s.A, s.phi1, s.phi2):
        assert np.abs(M + M.conj().T).max() < 1e-15
    h = N.random_traceless_state(3, rng, real_form="higgs")
    assert np.abs(h.A + h.A.conj().T).max() < 1e-15
    assert np.abs(h.phi1 - h.phi1.conj().T).max() < 1e-15
    assert np.abs(h.traces()).max() < 1e-15
    with pytest.raises(ValueError):
        N.random_traceless_state(3, rng, real_form="split")


def test_toda_line_reduction_is_second_order():
    s = toda.tzitzeica_system(0.8)
    model = gauge.representation_for(s)
    errs = []
    for nx in (41, 81, 161):
        g = toda.Grid2D.from_extent(nx, 9, 0.5, 0.1)
        om = toda.plane_wave_solution(s, g, 0.0, [0.1], [0.3])
        states = N.toda_line_states(model, om, 0.8, iy=3)
        errs.append(N.toda_line_consistency(states))
    assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5


def test_csv_exports(tmp_path):
    traj = N.integrate(N.su2_triple(0.1, 0.2, 0.3), 0.1, 0.01)
    N.write_trajectory_csv(tmp_path / "t.csv", traj, every=5, sidecar={"seed": 1})
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert len(lines) == 1 + 3
    assert json.loads((tmp_path / "t.csv.json").read_text())["seed"] == 1
    N.write_curve_csv(tmp_path / "c.csv", N.spectral_curve(traj.final))
    assert (tmp_path / "c.csv").read_text().startswith("eta_power,zeta_power,re,im\n")
