import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from scqc import library
from scqc.benchmark import (DEFAULT_LENGTHS, QPT_DZ_GRID, QPT_EPS_GRID, RB_DZ_GRID, RB_EPS_GRID,
                            SQRT_X, channel_fidelity, clifford_index,
                            clifford_inverse, clifford_products, clifford_table, fit_decay,
                            ideal_choi, noise_heatmap, program_executor, project_cptp,
                            pulse_executor, qpt, rb_run, rb_sequences, save_choi_csv,
                            save_heatmap, square_gate, square_gateset)
from scqc.dynamics import IDENTITY, SIGMA_X, SIGMA_Z, NoisePoint, propagate, rz
from scqc.errors import DomainError, FitError, ReconstructionError
from scqc.pulsegen import scale_pulse
from scqc.shaper import GATES

H = GATES['H']


def same_up_to_phase(U, V, tol=1e-10):
    return abs(abs(np.trace(U.conj().T @ V)) - 2.0) <= tol


def choi_oracle(U):
    """``|U>><<U|`` with ``|U>> = sum_i |i> (x) U|i>``."""
    v = np.concatenate([U[:, 0], U[:, 1]])
    return np.outer(v, v.conj())


# -- Clifford group ------------------------------------------------------------

def test_table_has_24_distinct_elements():
    table = clifford_table()
    assert len(table) == 24
    for i, a in enumerate(table):
        assert a.index == i
        for b in table[:i]:
            assert not same_up_to_phase(a.unitary, b.unitary)


def test_decompositions_reproduce_unitaries():
    for c in clifford_table():
        t1, t2, t3 = c.decomposition
        U = rz(t1) @ SQRT_X @ rz(t2) @ SQRT_X @ rz(t3)
        assert same_up_to_phase(U, c.unitary)


def test_native_programs_reproduce_unitaries():
    for c in clifford_table():
        U = IDENTITY
        for op in c.native:
            U = (rz(op[1]) if op[0] == 'Z' else {'X': SIGMA_X, 'SX': SQRT_X}[op[0]]) @ U
        assert same_up_to_phase(U, c.unitary)
    assert np.mean([c.pulses for c in clifford_table()]) < 2


def test_identity_decomposition():
    c = clifford_table()[clifford_index(IDENTITY)]
    assert c.decomposition == pytest.approx((-np.pi / 2, np.pi, -np.pi / 2))
    assert c.pulses == 0


def test_hadamard_decomposition():
    c = clifford_table()[clifford_index(H)]
    assert same_up_to_phase(rz(np.pi / 2) @ SQRT_X @ rz(np.pi / 2), H, 1e-12)
    assert c.native == (('Z', np.pi / 2), ('SX',), ('Z', np.pi / 2))


def test_group_closure():
    mul = clifford_products()
    table = clifford_table()
    for i in range(24):
        for j in range(24):
            assert same_up_to_phase(table[i].unitary @ table[j].unitary,
                                    table[mul[i, j]].unitary)


def test_inverses():
    mul = clifford_products()
    e = clifford_index(IDENTITY)
    for i in range(24):
        assert mul[i, clifford_inverse(i)] == e


def test_non_clifford_lookup():
    with pytest.raises(DomainError):
        clifford_index(rz(0.3))


# -- channels and QPT --------------------------------------------------------------

def test_identity_channel_choi():
    est = qpt(lambda noise: IDENTITY)
    phi = np.array([1, 0, 0, 1]) / math.sqrt(2)
    np.testing.assert_allclose(est.choi, 2 * np.outer(phi, phi), atol=1e-12)
    assert est.channel_fidelity == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize('seed', range(4))
def test_unitary_choi_matches_vectorization(seed):
    U = unitary_group.rvs(2, random_state=seed)
    np.testing.assert_allclose(ideal_choi(U), choi_oracle(U), atol=1e-12)
    est = qpt(lambda noise: U)
    np.testing.assert_allclose(est.choi, choi_oracle(U), atol=1e-8)


def test_depolarizing_channel_fidelity():
    p = 0.9
    ops = [math.sqrt(1 - 3 * (1 - p) / 4) * IDENTITY] + \
          [math.sqrt((1 - p) / 4) * P for P in (SIGMA_X, 1j * SIGMA_X @ SIGMA_Z, SIGMA_Z)]
    est = qpt(lambda noise: np.array(ops), target=IDENTITY)
    np.testing.assert_allclose(est.ptm, np.diag([1, p, p, p]), atol=1e-12)
    assert est.channel_fidelity == pytest.approx((1 + 3 * p) / 4, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), shots=st.integers(10, 2000))
def test_sampled_estimates_are_cptp(seed, shots):
    U = unitary_group.rvs(2, random_state=seed)
    J = qpt(lambda noise: U, shots=shots, rng_seed=seed).choi
    assert np.abs(J - J.conj().T).max() <= 1e-9
    assert np.trace(J).real == pytest.approx(2.0, abs=1e-9)
    assert np.linalg.eigvalsh(J).min() >= -1e-9


def test_projection_clips_negative_part():
    J = project_cptp(np.diag([2.0, -0.5, 0.5, 0.0]).astype(complex))
    assert np.linalg.eigvalsh(J).min() >= -1e-12
    assert np.trace(J).real == pytest.approx(2.0)


def test_degenerate_preparations():
    preps = np.array([[0, 0, 1], [0, 0, -1], [0, 0, 1.0]])
    with pytest.raises(ReconstructionError):
        qpt(lambda noise: IDENTITY, preparations=preps)


def test_spam_lowers_fidelity():
    clean = qpt(lambda noise: H, target=H)
    noisy = qpt(lambda noise: H, target=H, spam=(0.02, 0.01))
    assert noisy.channel_fidelity < clean.channel_fidelity


def test_channel_fidelity_of_unitaries():
    a, b = ideal_choi(H), ideal_choi(SQRT_X)
    expected = abs(np.trace(H.conj().T @ SQRT_X)) ** 2 / 4
    assert channel_fidelity(a, b) == pytest.approx(expected, abs=1e-12)
    assert channel_fidelity(b, a) == pytest.approx(expected, abs=1e-12)


def test_channel_fidelity_of_mixed_states():
    rho = np.diag([0.5, 0.3, 0.2, 0.0]).astype(complex)
    sigma = np.diag([0.25, 0.25, 0.25, 0.25]).astype(complex)
    expected = (0.5 * (np.sqrt(0.5) + np.sqrt(0.3) + np.sqrt(0.2))) ** 2
    assert channel_fidelity(rho, sigma) == pytest.approx(expected, abs=1e-12)


def test_robust_hadamard_is_ideal_at_zero_noise():
    est = qpt(pulse_executor(library.pulse('h_doubly')), target=H)
    assert est.channel_fidelity >= 0.9999


def test_robust_hadamard_beats_square_at_qpt_corner():
    noise = NoisePoint(QPT_EPS_GRID[-1], QPT_DZ_GRID[-1])
    robust = scale_pulse(library.pulse('h_doubly'), tg=library.GATE_TIMES['h_doubly'])
    r = qpt(pulse_executor(robust), noise, target=H).infidelity
    s = qpt(pulse_executor(square_gate('H')), noise, target=H).infidelity
    assert r < s


def test_program_executor_applies_virtual_z():
    sx = square_gate('SX')
    U = program_executor([np.pi / 2, sx, np.pi / 2])(NoisePoint())
    assert same_up_to_phase(U, H)


def test_square_gates():
    for name in ('X', 'SX', 'H'):
        assert same_up_to_phase(propagate(square_gate(name)), GATES[name], 1e-12)
    with pytest.raises(DomainError):
        square_gate('T')


def test_choi_csv(tmp_path):
    save_choi_csv(qpt(lambda noise: H), tmp_path / 'choi.csv')
    rows = np.loadtxt(tmp_path / 'choi.csv', delimiter=',', skiprows=1)
    J = np.zeros((4, 4), dtype=complex)
    for i, j, re, im in rows:
        J[int(i), int(j)] = re + 1j * im
    np.testing.assert_allclose(J, choi_oracle(H), atol=1e-12)


# -- randomized benchmarking ---------------------------------------------------

def test_sequences_invert_to_identity():
    circ = rb_sequences((1, 7, 30), n_seeds=3, rng_seed=5)
    table = clifford_table()
    for seq in circ.sequences:
        U = IDENTITY
        for c in seq:
            U = table[c].unitary @ U
        assert same_up_to_phase(U, IDENTITY)
    assert [len(s) for s in circ.sequences] == [2] * 3 + [8] * 3 + [31] * 3


def test_sequences_are_deterministic():
    a, b = rb_sequences((5, 9), 2, 11), rb_sequences((5, 9), 2, 11)
    assert all(np.array_equal(x, y) for x, y in zip(a.sequences, b.sequences))
    c = rb_sequences((5, 9), 2, 12)
    assert not all(np.array_equal(x, y) for x, y in zip(a.sequences, c.sequences))


@pytest.mark.parametrize('kw', [dict(lengths=(4001,)), dict(lengths=(0,)), dict(n_seeds=1)])
def test_sequence_limits(kw):
    with pytest.raises(DomainError):
        rb_sequences(**kw)


@pytest.mark.parametrize('compilation', ['native', 'canonical'])
def test_ideal_gates_survive(compilation):
    res = rb_run(rb_sequences((1, 50, 400), 3), compilation=compilation)
    np.testing.assert_allclose(res.survival, 1.0, atol=1e-9)
    assert res.epc == 0.0


def test_depolarizing_survival_at_full_depth():
    res = rb_run(rb_sequences((1, 1000, 4000), 2), depolarizing=0.999)
    # m random Cliffords plus the inverse: m + 1 noisy steps
    assert res.survival[-1] == pytest.approx(0.5 + 0.5 * 0.999 ** 4001, abs=1e-9)


def test_depolarizing_parameter_recovered():
    res = rb_run(rb_sequences(DEFAULT_LENGTHS, 2), depolarizing=0.998)
    assert abs(res.p - 0.998) <= 1e-3
    assert res.epc == pytest.approx(0.001, abs=5e-4)
    assert 0.0 <= res.p <= 1.0


def test_compilations_agree_for_ideal_pulses():
    circ = rb_sequences((1, 5, 20), 2)
    for noise in (NoisePoint(), NoisePoint(0.02, 1e6)):
        # the ideal gateset ignores noise, so both compilations must match exactly
        a = rb_run(circ, noise=noise)
        b = rb_run(circ, noise=noise, compilation='canonical')
        np.testing.assert_allclose(a.raw, b.raw, atol=1e-9)


def test_robust_gateset_is_error_free_without_noise():
    res = rb_run(rb_sequences(), library.robust_gateset())
    assert res.epc <= 1e-7


def test_square_gateset_degrades_at_corner():
    circ = rb_sequences()
    gs = square_gateset()
    base = rb_run(circ, gs).epc
    corner = rb_run(circ, gs, NoisePoint(RB_EPS_GRID[-1], RB_DZ_GRID[-1])).epc
    assert corner >= 10 * base and corner > 1e-3


def test_square_epc_increases_along_each_axis():
    circ = rb_sequences()
    gs = square_gateset()
    along_eps = [rb_run(circ, gs, NoisePoint(e, 0.0)) for e in RB_EPS_GRID]
    along_dz = [rb_run(circ, gs, NoisePoint(0.0, d)) for d in RB_DZ_GRID]
    for series in (along_eps, along_dz):
        for a, b in zip(series, series[1:]):
            assert b.epc >= a.epc - max(a.epc_std, b.epc_std)


def test_shots_mode_is_seeded():
    circ = rb_sequences((1, 100, 1000), 3)
    a = rb_run(circ, depolarizing=0.99, shots=500, rng_seed=1)
    b = rb_run(circ, depolarizing=0.99, shots=500, rng_seed=1)
    assert np.array_equal(a.raw, b.raw)
    assert np.all((a.raw >= 0) & (a.raw <= 1))


def test_fit_rejects_bad_data():
    with pytest.raises(FitError):
        fit_decay([1, 2, 3], [1.0, np.nan, 0.5])
    with pytest.raises(FitError):
        fit_decay([1, 100], [0.99, 0.8])


def test_compilation_name_checked():
    with pytest.raises(DomainError):
        rb_run(rb_sequences((1, 2), 2), compilation='fast')


# -- heatmaps ------------------------------------------------------------------

def test_rb_heatmap_shape_and_corner(tmp_path):
    circ = rb_sequences((1, 100, 1000), 2)
    gs = square_gateset()
    hm = noise_heatmap(gs, circuits=circ)
    assert hm.values.shape == (6, 6)
    assert hm.values[0, 0] == rb_run(circ, gs).epc
    assert hm.values[-1, 2] == rb_run(circ, gs, NoisePoint(RB_EPS_GRID[2], RB_DZ_GRID[-1])).epc
    save_heatmap(hm, tmp_path / 'h.csv', tmp_path / 'h.json')
    lines = (tmp_path / 'h.csv').read_text().splitlines()
    assert len(lines) == 7
    assert [float(v) for v in lines[0].split(',')[1:]] == list(RB_EPS_GRID)
    assert float(lines[-1].split(',')[0]) == RB_DZ_GRID[-1]
    meta = json.loads((tmp_path / 'h.json').read_text())
    assert meta['protocol'] == 'rb' and meta['gateset'] == gs.hashes()


def test_parallel_heatmap_matches_serial():
    circ = rb_sequences((1, 10, 50), 2)
    kw = dict(eps=(0.0, 0.03), delta_z=(0.0, 2e6), circuits=circ)
    a = noise_heatmap(square_gateset(), **kw)
    b = noise_heatmap(square_gateset(), jobs=2, **kw)
    assert np.array_equal(a.values, b.values)


@pytest.mark.parametrize('name, gate', [('x_doubly', 'X'), ('sx_doubly', 'SX')])
def test_qpt_heatmap_is_nearly_symmetric_in_detuning(name, gate):
    # resonant pulses only; a detuned pulse (H) is not symmetric in delta_z
    pulse = scale_pulse(library.pulse(name), tg=library.GATE_TIMES[name])
    hm = noise_heatmap(pulse, eps=(0.0,), protocol='qpt', target=GATES[gate])
    assert hm.values.shape == (len(QPT_DZ_GRID), 1)
    col = hm.values[:, 0]
    for lo, hi in zip(col, col[::-1]):
        assert abs(lo - hi) <= 0.25 * max(lo, hi)


def test_heatmap_protocol_checked():
    with pytest.raises(DomainError):
        noise_heatmap(square_gateset(), protocol='xeb')
