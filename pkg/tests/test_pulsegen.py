import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scqc.dynamics import (IDENTITY, SIGMA_X, gate_infidelity, magnus_pi1, propagate, rz,
                           su2_normalize)
from scqc.errors import CapacityError, DomainError, ResolutionError
from scqc.pulsegen import (DEFAULT_DT, PulseWaveform, QubitSpec, SnapWarning, align_gate,
                           fields_from_geometry, geometric_blocks, geometric_propagator,
                           initial_phase, load_pulse, resample, save_envelope_csv, save_pulse,
                           scale_pulse, to_dimensionless)
from scqc.spacecurve import SpaceCurve, bernstein, frenet_trace


def fit(f, order=16):
    x = np.linspace(0, 1, 400)
    return np.linalg.lstsq(bernstein(order, x), f(x), rcond=None)[0]


def helix_trace(M=2048):
    W = fit(lambda x: np.stack([np.cos(2 * np.pi * x), np.sin(2 * np.pi * x),
                                np.pi * x], axis=-1))
    return frenet_trace(SpaceCurve(W), M)


# random curves without near-cusps (peak curvature times length below 500)
SMOOTH_SEEDS = [2, 3, 4, 5, 6]


def random_trace(k, M=4096, order=7):
    rng = np.random.default_rng(SMOOTH_SEEDS[k])
    return frenet_trace(SpaceCurve(rng.normal(size=(order + 1, 3))), M)


def unit_pulse(angle=np.pi, samples=64):
    return PulseWaveform(np.full(samples, angle), np.zeros(samples), 0.0, 1.0, angle)


def test_helix_gives_constant_drive_and_phase_ramp():
    tr = helix_trace()
    L = tr.total_length
    p = fields_from_geometry(tr, phi0=0.3)
    np.testing.assert_allclose(p.omega, 0.8 * L, rtol=2e-3)
    np.testing.assert_allclose(np.diff(p.phi) * p.samples, 0.4 * L, rtol=2e-3)
    assert initial_phase(tr, p) == pytest.approx(0.3, abs=1e-12)
    assert p.gate_time == 1.0 and p.omega_max_dimless == pytest.approx(p.omega.max())


def test_detuning_enters_phase_ramp():
    tr = helix_trace(512)
    a, b = fields_from_geometry(tr), fields_from_geometry(tr, delta=2.0)
    np.testing.assert_allclose(b.phi - a.phi, 2.0 * tr.t, atol=1e-12)
    assert b.delta == 2.0


@pytest.mark.parametrize('seed', range(4))
def test_geometric_propagator_matches_simulation(seed):
    tr = random_trace(seed, 8192)
    delta, phi0 = 0.7 * seed - 1.0, 0.4 * seed
    U = propagate(fields_from_geometry(tr, delta, phi0))
    assert gate_infidelity(U, geometric_propagator(tr, delta, phi0)) < 1e-7


@pytest.mark.parametrize('seed', range(3))
def test_geometric_blocks_match_magnus(seed):
    tr = random_trace(seed, 16384)
    phi0 = 0.5 - seed
    D, A = magnus_pi1(fields_from_geometry(tr, 0.0, phi0))
    Dg, Ag = geometric_blocks(tr, phi0)
    np.testing.assert_allclose(D, Dg, atol=1e-6)
    # the amplitude block involves curvature, sampled less accurately than the frame
    np.testing.assert_allclose(A, Ag, atol=2e-4 * max(1.0, np.abs(Ag).max()))


def test_initial_phase_round_trip():
    tr = random_trace(1, 512)
    assert initial_phase(tr, fields_from_geometry(tr, 0.9, -1.3)) == pytest.approx(-1.3)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 100))
def test_align_gate_recovers_z_rotations(a, b, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=4)
    v /= np.linalg.norm(v)
    U = np.array([[v[0] + 1j * v[1], -v[2] + 1j * v[3]], [v[2] + 1j * v[3], v[0] - 1j * v[1]]])
    target = rz(a) @ U @ rz(b)
    d, ph = align_gate(U, target)
    assert gate_infidelity(rz(d + ph) @ U @ rz(-ph), target) < 1e-12
    assert -math.pi <= d <= math.pi


def test_align_gate_leaves_detuning_free_for_pi_rotations():
    d, _ = align_gate(-1j * SIGMA_X, -1j * SIGMA_X)
    assert d == 0.0


# -- scaling ------------------------------------------------------------------

def test_scale_round_trip():
    p = unit_pulse()
    with warnings.catch_warnings():
        warnings.simplefilter('error')
        phys = scale_pulse(p, tg=90 * DEFAULT_DT)
    assert phys.physical and phys.gate_time == pytest.approx(20e-9)
    assert phys.gate_time * phys.omega_max == pytest.approx(np.pi)
    back = to_dimensionless(phys)
    np.testing.assert_allclose(back.omega, p.omega)
    assert back.omega_max_dimless == p.omega_max_dimless


def test_scale_by_peak_drive():
    phys = scale_pulse(unit_pulse(), omega_max=np.pi / (90 * DEFAULT_DT))
    assert phys.gate_time == pytest.approx(20e-9)


def test_propagator_is_invariant_under_scaling():
    tr = random_trace(2, 1024)
    p = fields_from_geometry(tr, 0.4, 0.1)
    phys = scale_pulse(p, tg=36 * DEFAULT_DT)
    np.testing.assert_allclose(propagate(phys), propagate(p), atol=1e-12)


def test_snap_warning():
    with pytest.warns(SnapWarning):
        phys = scale_pulse(unit_pulse(), tg=20.1e-9)
    assert phys.gate_time == pytest.approx(91 * DEFAULT_DT)
    assert phys.gate_time * phys.omega_max == pytest.approx(np.pi)


def test_capacity_error():
    qubit = QubitSpec(0.0, 0.0, max_drive=1e8)
    with pytest.raises(CapacityError) as info:
        scale_pulse(unit_pulse(), tg=90 * DEFAULT_DT, qubit=qubit)
    assert info.value.payload['limit'] == 1e8


def test_scale_needs_exactly_one_target():
    with pytest.raises(DomainError):
        scale_pulse(unit_pulse())
    with pytest.raises(DomainError):
        scale_pulse(unit_pulse(), tg=1e-8, omega_max=1e8)


def test_qubit_detuning():
    q = QubitSpec(5.0, 5.5).tuned_for(PulseWaveform(np.ones(4), np.zeros(4), -0.2, 1.0, 1.0))
    assert q.detuning == pytest.approx(-0.2)


# -- resampling -----------------------------------------------------------------

def test_resample_keeps_endpoints_and_duration():
    rng = np.random.default_rng(0)
    p = PulseWaveform(rng.uniform(0, 1, 100), rng.uniform(0, 1, 100), 0.3, 1.0, 1.0)
    q = resample(p, 1 / 37)
    assert q.samples == 37 and q.gate_time == 1.0 and q.delta == 0.3
    assert q.omega[0] == p.omega[0] and q.omega[-1] == p.omega[-1]


def test_resample_identity():
    p = unit_pulse(samples=64)
    assert resample(p, 1 / 64) is p


def test_resample_constant_pulse_keeps_gate():
    q = resample(unit_pulse(samples=64), 1 / 200)
    np.testing.assert_allclose(propagate(q), -1j * SIGMA_X, atol=1e-12)


def test_resample_too_coarse():
    with pytest.raises(ResolutionError):
        resample(unit_pulse(), 0.1)


def test_waveform_validation():
    with pytest.raises(DomainError):
        PulseWaveform(np.array([-1.0]), np.zeros(1), 0.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        PulseWaveform(np.ones(3), np.zeros(2), 0.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        PulseWaveform(np.ones(3), np.zeros(3), 0.0, 0.0, 1.0)


# -- files ---------------------------------------------------------------------

def test_pulse_json_round_trip(tmp_path):
    tr = random_trace(3, 256)
    p = scale_pulse(fields_from_geometry(tr, 0.2, 0.1, 'demo'), tg=180 * DEFAULT_DT)
    save_pulse(p, tmp_path / 'p.json', note='x')
    q = load_pulse(tmp_path / 'p.json')
    assert np.array_equal(q.omega, p.omega) and np.array_equal(q.phi, p.phi)
    assert (q.delta, q.gate_time, q.name, q.physical) == (p.delta, p.gate_time, 'demo', True)
    assert q.omega_max_dimless == p.omega_max_dimless


def test_envelope_csv(tmp_path):
    p = fields_from_geometry(random_trace(4, 128))
    save_envelope_csv(p, tmp_path / 'env.csv')
    data = np.loadtxt(tmp_path / 'env.csv', delimiter=',', skiprows=1)
    assert data.shape == (128, 2)
    env = data[:, 0] + 1j * data[:, 1]
    assert np.abs(env).max() == pytest.approx(1.0)
    np.testing.assert_allclose(env, p.envelope)


def test_closed_circle_pulse_is_full_turn():
    W = fit(lambda x: np.stack([np.cos(2 * np.pi * x), np.sin(2 * np.pi * x), 0 * x], axis=-1))
    W[-1] = W[0]
    tr = frenet_trace(SpaceCurve(W, closed=True), 2048)
    U = su2_normalize(propagate(fields_from_geometry(tr)))
    # a 2 pi rotation: -1 in SU(2)
    np.testing.assert_allclose(U, -IDENTITY, atol=1e-5)
