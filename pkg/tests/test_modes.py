import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oscicell import modes, pde1d
from oscicell.params import ModelParams


def mv(coeffs, K=1.0, Dth=0.0, M=8, measure=2.0):
    A = np.zeros(M + 1, dtype=complex)
    A[: len(coeffs)] = coeffs
    return modes.ModeVector(A, measure, K, Dth)


def test_rhs_hand_example():
    m = mv([1 / (2 * math.pi), 0.1], K=1.0)
    d = modes.mode_rhs(m)
    assert d[1] == pytest.approx(0.1, abs=1e-15)
    assert d[0] == 0


def test_rhs_pure_decay_without_first_mode():
    m = mv([1.0, 0.0, 0.3 + 0.1j, -0.2j], K=5.0, Dth=0.07)
    j = np.arange(m.M + 1)
    np.testing.assert_allclose(modes.mode_rhs(m), -(j**2) * 0.07 * m.A, atol=1e-15)


def test_rhs_closure_uses_conjugate_for_negative_index():
    # j=1 term: A1*A0 - conj(A1)*A2 ; j=2: 2(A1*A1 - conj(A1)*A3)
    A1, A2, A3 = 0.2 + 0.1j, 0.05j, 0.01
    m = mv([0.5, A1, A2, A3], K=1.0, M=3)
    c = 2 * math.pi
    d = modes.mode_rhs(m)
    assert d[1] == pytest.approx(c * (A1 * 0.5 - np.conj(A1) * A2))
    assert d[2] == pytest.approx(2 * c * (A1 * A1 - np.conj(A1) * A3))
    assert d[3] == pytest.approx(3 * c * (A1 * A2))  # A_{M+1} = 0


def test_lyapunov_examples():
    assert modes.lyapunov_u(mv([1.0])) == 0.0
    assert modes.lyapunov_u(mv([1.0, 0.3])) == pytest.approx(0.09)
    assert modes.lyapunov_u(mv([1.0, 0.0, 0.4j])) == pytest.approx(0.08)


def test_small_truncation_rejected():
    with pytest.raises(ValueError):
        modes.ModeVector(np.zeros(2), 2.0, 1.0)


def test_heat_solution_when_uncoupled():
    m0 = mv([1.0, 0.3, 0.2 - 0.1j, 0.05], K=0.0, Dth=0.1)
    tr = modes.integrate_modes(m0, 2.0, 1e-3, cadence=0.5)
    j = np.arange(m0.M + 1)
    for t, A in zip(tr.times, tr.states):
        np.testing.assert_allclose(A, m0.A * np.exp(-(j**2) * 0.1 * t), atol=1e-12)


def test_A0_invariant():
    m0 = mv([0.7, 0.3, 0.1], K=-1.0, Dth=0.05, M=16)
    tr = modes.integrate_modes(m0, 5.0, 1e-3, cadence=1.0)
    assert np.all(tr.states[:, 0] == m0.A[0])


@settings(max_examples=10, deadline=None)
@given(st.floats(-2.0, -0.1), st.floats(0.01, 0.2), st.floats(0.05, 0.4))
def test_gronwall_bound_negative_coupling(K, Dth, a1):
    m0 = mv([1.0, a1, 0.5 * a1], K=K, Dth=Dth, M=16)
    tr = modes.integrate_modes(m0, 3.0, 1e-3, cadence=0.1)
    bound = tr.u[0] * np.exp(-2 * Dth * tr.times) + 1e-8
    assert np.all(tr.u <= bound)
    assert np.all(np.diff(tr.u) <= 1e-10)


def test_decay_to_uniform_state():
    m0 = mv([1 / (2 * math.pi), 0.1, 0.05j], K=-1.0, Dth=0.05, M=16)
    tr = modes.integrate_modes(m0, 200.0, 1e-2, cadence=50.0)
    assert np.abs(tr.states[-1][1:]).max() < 1e-6


def test_truncation_robustness():
    def u_end(M):
        m0 = mv([1.0, 0.3, 0.1], K=-1.0, Dth=0.05, M=M)
        return modes.integrate_modes(m0, 2.0, 1e-3, cadence=0.5).u
    np.testing.assert_allclose(u_end(32), u_end(64), atol=1e-8)


def test_dt_halving_converged():
    m0 = mv([1.0, 0.3, 0.1], K=-1.0, Dth=0.05, M=32)
    a = modes.integrate_modes(m0, 2.0, 1e-3).states[-1]
    b = modes.integrate_modes(m0, 2.0, 5e-4).states[-1]
    assert np.abs(a - b).max() < 1e-8


def test_saturation_halt_for_positive_coupling():
    m0 = mv([1 / (2 * math.pi), 0.05], K=1.0, Dth=0.0, M=16)
    tr = modes.integrate_modes(m0, 200.0, 1e-3, cadence=1.0)
    assert tr.halted == "saturation"
    assert tr.u[-1] > tr.u[0]
    A = tr.states[-1]
    assert abs(A[-1]) / abs(A[1]) > 0.1


def test_blow_up_error_carries_last_state():
    m0 = mv([1.0, 0.25], K=5.0, Dth=0.0, M=32)
    with pytest.raises(modes.BlowUpError) as err:
        modes.integrate_modes(m0, 50.0, 0.01, saturation=math.inf)
    assert np.all(np.isfinite(err.value.last_state.A))


def test_bad_step_arguments():
    m0 = mv([1.0, 0.1])
    with pytest.raises(ValueError):
        modes.integrate_modes(m0, 1.0, 0.0)
    with pytest.raises(ValueError):
        modes.integrate_modes(m0, 1.0, 0.3)
    with pytest.raises(ValueError):
        modes.integrate_modes(m0, 1.0, 0.1, cadence=0.15)


def test_reconstruct_and_project_round_trip():
    th = (np.arange(64) + 0.5) * 2 * math.pi / 64
    R = 1 + 0.5 * np.cos(th) + 0.2 * np.sin(3 * th)
    A = modes.from_density(R, 8)
    np.testing.assert_allclose(modes.reconstruct(A, th), R, atol=1e-13)
    assert A[1] == pytest.approx(0.25)


def _pde_vs_modes(K, T, Nth, M=32, Nx=4):
    prof = lambda th: 1 + 0.5 * np.cos(th) + 0.2 * np.cos(2 * th - 1)
    p = ModelParams(K=K, Dtheta=0.05, rho=1.0, L=10.0)
    f0 = pde1d.initial_field(Nx, Nth, 10.0, kind="theta_profile", profile=prof)
    res = pde1d.run(p, initial=f0, T_final=T, cadence=0.5, keep_fields=True)
    m0 = modes.ModeVector(modes.from_density(f0.values[0], M), 2.0, K, 0.05)
    tr = modes.integrate_modes(m0, T, 1e-3, cadence=0.5)
    return modes.reconstruct_and_compare(tr, res.snapshots)


def test_zero_dynamics_identical():
    th = (np.arange(32) + 0.5) * 2 * math.pi / 32
    f = pde1d.initial_field(4, 32, 10.0, kind="theta_profile", profile=lambda t: 1 + 0.3 * np.cos(t))
    res = pde1d.run(ModelParams(Dtheta=0.0), initial=f, T_final=1.0, cadence=0.5, keep_fields=True)
    tr = modes.integrate_modes(modes.ModeVector(modes.from_density(f.values[0], 8), 2.0, 0.0), 1.0, 1e-3, 0.5)
    assert modes.reconstruct_and_compare(tr, res.snapshots) < 1e-12
    assert th.size == 32


def test_pde_agreement_converges_with_resolution():
    # first-order solver: deviation roughly halves when Ntheta doubles
    e64, e128 = _pde_vs_modes(-1.0, 2.0, 64), _pde_vs_modes(-1.0, 2.0, 128)
    assert e128 < 0.6 * e64


def test_pde_agreement_positive_coupling_short_horizon():
    assert _pde_vs_modes(0.2, 1.0, 2048) < 1e-2


def test_alignment_error():
    f = pde1d.Field.uniform(4, 16, 10.0)
    tr = modes.integrate_modes(mv([1.0, 0.1]), 1.0, 0.1, cadence=0.5)
    with pytest.raises(modes.AlignmentError):
        modes.reconstruct_and_compare(tr, [f])
    g = [pde1d.Field(f.values, 10.0, t + 0.1) for t in tr.times]
    with pytest.raises(modes.AlignmentError):
        modes.reconstruct_and_compare(tr, g)


def test_csv_rows_and_records():
    tr = modes.integrate_modes(mv([1.0, 0.1], M=4), 0.2, 0.1)
    rows = modes.trajectory_rows(tr)
    assert len(rows[0]) == len(modes.csv_header()) == 11
    assert rows[0][2:4] == [1.0, 0.1] and rows[0][-1] == 0.0
    rec = modes.state_records(tr)[0]
    assert rec["re"][1] == 0.1 and len(rec["im"]) == 5
