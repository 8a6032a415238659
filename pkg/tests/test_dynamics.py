import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from scqc.dynamics import (IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z, NoisePoint, gate_fidelity,
                           gate_infidelity, infidelity_scan, lab_hamiltonian, magnus_pi1,
                           operator_to_vector, propagate, propagate_path, rz,
                           vector_to_operator)
from scqc.errors import DomainError, InputError
from scqc.pulsegen import PulseWaveform


def pulse(omega, phi, delta=0.0, tg=1.0):
    omega = np.asarray(omega, dtype=float)
    return PulseWaveform(omega, phi, delta, tg, float(omega.max() * tg) or 1.0)


def square(angle, samples=64, phi=0.0, delta=0.0):
    return pulse(np.full(samples, angle), np.full(samples, phi), delta)


def random_pulse(seed, samples=40):
    rng = np.random.default_rng(seed)
    return pulse(rng.uniform(0, 8, samples), rng.uniform(-np.pi, np.pi, samples),
                 rng.normal())


def expm_oracle(p, noise=NoisePoint()):
    """Ordered product of dense matrix exponentials, one per slice."""
    U = IDENTITY
    for om, ph in zip(p.omega, p.phi):
        om = (1 + noise.eps) * om
        H = 0.5 * (p.delta + noise.delta_z) * SIGMA_Z + 0.5 * om * (
            math.cos(ph) * SIGMA_X + math.sin(ph) * SIGMA_Y)
        U = expm(-1j * H * p.dt) @ U
    return U


def test_zero_drive_is_identity():
    p = PulseWaveform(np.zeros(32), np.zeros(32), 0.0, 1.0, 1.0)
    np.testing.assert_allclose(propagate(p), IDENTITY, atol=1e-15)


def test_pi_pulse_is_minus_i_sigma_x():
    np.testing.assert_allclose(propagate(square(np.pi)), -1j * SIGMA_X, atol=1e-12)


def test_detuned_rabi_closed_form():
    Om, De = 5.0, 2.0
    U = propagate(square(Om, delta=De))
    W = math.hypot(Om, De)
    n = np.array([Om, 0, De]) / W
    exact = math.cos(W / 2) * IDENTITY - 1j * math.sin(W / 2) * vector_to_operator(n)
    np.testing.assert_allclose(U, exact, atol=1e-12)


@pytest.mark.parametrize('seed', range(4))
def test_matches_matrix_exponential(seed):
    p = random_pulse(seed)
    noise = NoisePoint(0.03, -0.4)
    np.testing.assert_allclose(propagate(p, noise), expm_oracle(p, noise), atol=1e-12)


def test_amplitude_noise_scales_rotation():
    U = propagate(square(np.pi), NoisePoint(eps=0.1))
    np.testing.assert_allclose(U, expm(-0.5j * 1.1 * np.pi * SIGMA_X), atol=1e-12)


def test_path_endpoints():
    p = random_pulse(9)
    path = propagate_path(p)
    assert path.shape == (p.samples + 1, 2, 2)
    np.testing.assert_allclose(path[0], IDENTITY)
    np.testing.assert_allclose(path[-1], propagate(p), atol=1e-14)


def test_composition_of_pulses():
    a, b = random_pulse(1, 30), random_pulse(2, 30)
    b = PulseWaveform(b.omega, b.phi, a.delta, 1.0, 1.0)
    # doubling the duration keeps the slice width; the detuning is a rate
    joined = PulseWaveform(np.concatenate([a.omega, b.omega]), np.concatenate([a.phi, b.phi]),
                           a.delta, 2.0, 1.0)
    np.testing.assert_allclose(propagate(joined), propagate(b) @ propagate(a), atol=1e-12)


def test_slice_refinement_is_exact_for_constant_fields():
    coarse, fine = square(2.3, 16, 0.7, 1.1), square(2.3, 256, 0.7, 1.1)
    np.testing.assert_allclose(propagate(coarse), propagate(fine), atol=1e-13)


def test_square_pi_magnus_blocks():
    D, A = magnus_pi1(square(np.pi, 128))
    np.testing.assert_allclose(D, (2 / np.pi) * SIGMA_Y, atol=1e-12)
    np.testing.assert_allclose(A, np.pi * SIGMA_X, atol=1e-12)


@pytest.mark.parametrize('seed', range(3))
def test_magnus_blocks_match_finite_differences(seed):
    p = random_pulse(seed)
    D, A = magnus_pi1(p)
    U0 = propagate(p)
    h = 1e-6
    # U(x) ~ U0 (1 - i x/2 B) for a small noise amplitude x
    for block, make in ((D, lambda x: NoisePoint(delta_z=x)), (A, lambda x: NoisePoint(eps=x))):
        dU = (propagate(p, make(h)) - propagate(p, make(-h))) / (2 * h)
        np.testing.assert_allclose(2j * U0.conj().T @ dU, block, atol=1e-7)


def test_fidelity_values():
    assert gate_fidelity(SIGMA_X, SIGMA_X) == pytest.approx(1.0)
    assert gate_fidelity(IDENTITY, SIGMA_X) == pytest.approx(1 / 3)
    assert gate_infidelity(1j * SIGMA_Y, SIGMA_Y) == pytest.approx(0.0, abs=1e-15)


def test_fidelity_rejects_non_unitary():
    with pytest.raises(InputError):
        gate_infidelity(2 * IDENTITY, IDENTITY)


@settings(max_examples=25, deadline=None)
@given(phase=st.floats(-np.pi, np.pi), seed=st.integers(0, 1000))
def test_fidelity_ignores_global_phase(phase, seed):
    U = propagate(random_pulse(seed, 8))
    V = propagate(random_pulse(seed + 1, 8))
    assert gate_infidelity(np.exp(1j * phase) * U, V) == pytest.approx(gate_infidelity(U, V),
                                                                       abs=1e-12)


def test_square_pulse_infidelity_is_quadratic():
    eps = np.array([1e-3, 2e-3, 4e-3, 8e-3])
    r = infidelity_scan(square(np.pi), SIGMA_X, 'eps', eps)
    slope = np.polyfit(np.log(eps), np.log(r), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.02)


def test_scan_axis_is_checked():
    with pytest.raises(DomainError):
        infidelity_scan(square(np.pi), SIGMA_X, 'phase', [0.1])


def test_noise_validation():
    with pytest.raises(InputError):
        NoisePoint(eps=-1.0)
    with pytest.raises(InputError):
        NoisePoint(delta_z=np.nan)


def test_percent_noise():
    n = NoisePoint.from_percent(2.0, 10.0, reference=100.0)
    assert (n.eps, n.delta_z) == pytest.approx((0.02, 10.0))


def test_pauli_vector_round_trip():
    v = np.array([0.3, -1.2, 2.0])
    np.testing.assert_allclose(operator_to_vector(vector_to_operator(v)), v)


def test_rz_sign():
    np.testing.assert_allclose(rz(np.pi), -1j * SIGMA_Z, atol=1e-15)


def test_lab_frame_agrees_with_rotating_frame():
    wq, wd, Om, phi = 400.0, 401.0, 2.0, 0.6
    T = np.pi / Om

    def rhs(t, y):
        psi = y[:2] + 1j * y[2:]
        d = -1j * lab_hamiltonian(t, Om, phi, wq, wd) @ psi
        return np.concatenate([d.real, d.imag])

    cols = []
    for psi0 in IDENTITY:
        sol = solve_ivp(rhs, (0, T), np.concatenate([psi0.real, psi0.imag]),
                        rtol=1e-10, atol=1e-12, method='DOP853')
        cols.append(sol.y[:2, -1] + 1j * sol.y[2:, -1])
    U_lab = np.array(cols).T
    U_frame = rz(wd * T) @ U_lab
    U_rwa = propagate(square(Om * T, 64, phi, (wd - wq) * T))
    # counter-rotating terms contribute at order Omega / wd
    assert gate_infidelity(U_frame, U_rwa) < 1e-4
