"""Simulated benchmarking: process tomography and randomized benchmarking.

Noise is quasi-static: one :class:`~scqc.dynamics.NoisePoint` applies to
every pulse of a tomography run or an RB sequence.  Virtual Z gates are
exact frame rotations and take no time.  Every pulse is executed in its
own drive frame; the noise detuning ``delta_z`` must be given in the
pulse's units (rad/s for physical pulses, ``1/T_g`` for unit-less ones).
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .dynamics import (IDENTITY, REFERENCE_FIELD, SIGMA_X, SIGMA_Y, SIGMA_Z, NoisePoint,
                       propagate, rz, su2_normalize)
from .errors import DomainError, FitError, ReconstructionError
from .pulsegen import DEFAULT_DT, PulseWaveform, pulse_to_json, scale_pulse

__all__ = [
    'SQRT_X', 'CliffordGate', 'clifford_table', 'ChannelEstimate', 'qpt', 'ideal_choi',
    'choi_from_ptm', 'channel_fidelity', 'project_cptp', 'pulse_executor', 'program_executor',
    'Gateset', 'square_gate', 'square_gateset', 'RBCircuits', 'RBResult', 'rb_sequences', 'rb_run', 'fit_decay',
    'Heatmap', 'noise_heatmap', 'RB_EPS_GRID', 'RB_DZ_GRID', 'QPT_EPS_GRID', 'QPT_DZ_GRID',
    'DEFAULT_LENGTHS', 'save_choi_csv', 'save_heatmap', 'pulse_hash',
]

SQRT_X = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]])

RB_EPS_GRID = (0.0, 0.005, 0.015, 0.025, 0.035, 0.045)
RB_DZ_GRID = tuple(2 * math.pi * f * 1e3 for f in (0, 43, 86, 171, 257, 342))
_QPT_PERCENT = (-20, -15, -10, -5, 0, 5, 10, 15, 20)
QPT_EPS_GRID = tuple(p / 100 for p in _QPT_PERCENT)
QPT_DZ_GRID = tuple(p / 100 * REFERENCE_FIELD for p in _QPT_PERCENT)
DEFAULT_LENGTHS = (1, 25, 50, 100, 250, 500, 1000, 2000, 4000)
MAX_LENGTH = 4000


def _wrap(angle):
    a = math.remainder(angle, 2 * math.pi)
    return math.pi if abs(a + math.pi) < 1e-12 else a


def _same_up_to_phase(U, V, tol=1e-10):
    return abs(abs(np.trace(U.conj().T @ V)) - 2.0) <= tol


# -- Clifford group ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CliffordGate:
    """One element of the single-qubit Clifford group.

    ``decomposition`` holds ``(t1, t2, t3)`` with
    ``U ~ Z(t1) SX Z(t2) SX Z(t3)``; ``native`` is the shortest program in
    ``{Z(a), SX, X}``, listed in time order (first item applied first), with
    Z entries as ``('Z', angle)``.
    """

    index: int
    unitary: np.ndarray
    decomposition: tuple
    native: tuple

    @property
    def pulses(self) -> int:
        return sum(1 for op in self.native if op[0] != 'Z')


def _zsxzsxz(t1, t2, t3):
    return rz(t1) @ SQRT_X @ rz(t2) @ SQRT_X @ rz(t3)


def _canonical_angles(U) -> tuple:
    """``(t1, t2, t3)`` from the ZYZ Euler angles via
    ``Rz(phi) Ry(theta) Rz(lam) ~ Rz(phi + pi) SX Rz(theta + pi) SX Rz(lam)``."""
    a, b = su2_normalize(U)[:, 0]
    theta = 2.0 * math.atan2(abs(b), abs(a))
    if abs(b) < 1e-12:
        total = -2.0 * np.angle(a)
        lam = -math.pi / 2
        phi = total - lam
    elif abs(a) < 1e-12:
        diff = 2.0 * np.angle(b)
        lam = -math.pi / 2
        phi = diff + lam
    else:
        total, diff = -2.0 * np.angle(a), 2.0 * np.angle(b)
        phi, lam = 0.5 * (total + diff), 0.5 * (total - diff)
    return (_wrap(phi + math.pi), _wrap(theta + math.pi), _wrap(lam))


_QUARTERS = (0.0, math.pi / 2, math.pi, -math.pi / 2)


def _program_unitary(program) -> np.ndarray:
    U = IDENTITY
    for op in program:
        if op[0] == 'Z':
            U = rz(op[1]) @ U
        else:
            U = (SIGMA_X if op[0] == 'X' else SQRT_X) @ U
    return U


def _native_program(U) -> tuple:
    """Fewest-pulse program; Z(0) entries are dropped."""
    def clean(prog):
        return tuple(op for op in prog if not (op[0] == 'Z' and op[1] == 0.0))

    for a in _QUARTERS:
        if _same_up_to_phase(rz(a), U):
            return clean((('Z', a),))
    for pulse in ('SX', 'X'):
        for a in _QUARTERS:
            for b in _QUARTERS:
                prog = (('Z', b), (pulse,), ('Z', a))
                if _same_up_to_phase(_program_unitary(prog), U):
                    return clean(prog)
    t1, t2, t3 = _canonical_angles(U)
    return clean((('Z', t3), ('SX',), ('Z', t2), ('SX',), ('Z', t1)))


def _phase_key(U):
    flat = U.ravel()
    k = int(np.argmax(np.abs(flat) > 1e-6))
    V = flat * np.exp(-1j * np.angle(flat[k]))
    return tuple(np.round(np.concatenate([V.real, V.imag]), 8) + 0.0)


_TABLE = None


def clifford_table() -> tuple:
    """The 24 single-qubit Cliffords (index 0 is the identity).

    Generated breadth-first from ``SX`` and ``S``; the order is fixed.
    """
    global _TABLE
    if _TABLE is None:
        gens = (SQRT_X, rz(math.pi / 2))
        found = [IDENTITY]
        keys = {_phase_key(IDENTITY): 0}
        i = 0
        while i < len(found):
            for g in gens:
                V = su2_normalize(g @ found[i])
                k = _phase_key(V)
                if k not in keys:
                    keys[k] = len(found)
                    found.append(V)
            i += 1
        if len(found) != 24:
            raise RuntimeError('Clifford generation failed')
        _TABLE = tuple(CliffordGate(j, U, _canonical_angles(U), _native_program(U))
                       for j, U in enumerate(found))
    return _TABLE


def clifford_index(U) -> int:
    key = _phase_key(su2_normalize(U))
    for c in clifford_table():
        if _phase_key(c.unitary) == key:
            return c.index
    raise DomainError('matrix is not a Clifford')


_MUL = None


def clifford_products() -> np.ndarray:
    """``mul[i, j]`` is the index of ``C_i @ C_j``."""
    global _MUL
    if _MUL is None:
        table = clifford_table()
        lookup = {_phase_key(c.unitary): c.index for c in table}
        mul = np.empty((24, 24), dtype=int)
        for a in table:
            for b in table:
                mul[a.index, b.index] = lookup[_phase_key(su2_normalize(a.unitary @ b.unitary))]
        _MUL = mul
    return _MUL


def clifford_inverse(index: int) -> int:
    return int(np.nonzero(clifford_products()[:, index] == 0)[0][0])


# -- channels ------------------------------------------------------------------

_PAULI4 = np.array([IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z])


def _kraus(ops) -> np.ndarray:
    K = np.asarray(ops, dtype=complex)
    if K.shape == (2, 2):
        K = K[None]
    if K.ndim != 3 or K.shape[1:] != (2, 2):
        raise DomainError('executor must return a 2x2 unitary or a (k, 2, 2) Kraus stack')
    return K


def _ptm(kraus) -> np.ndarray:
    """Pauli transfer matrix ``R_ij = tr(P_i E(P_j)) / 2``."""
    K = _kraus(kraus)
    out = np.einsum('kab,jbc,kdc->jad', K, _PAULI4, K.conj())
    return np.real(np.einsum('iba,jab->ij', _PAULI4, out)) / 2.0


def choi_from_ptm(R) -> np.ndarray:
    """``J = sum_ij |i><j| (x) E(|i><j|)``; trace 2 for trace-preserving maps."""
    J = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            E = np.zeros((2, 2), dtype=complex)
            E[i, j] = 1.0
            coeff = np.einsum('kab,ba->k', _PAULI4, E)
            out = np.einsum('k,kab->ab', R @ coeff, _PAULI4) / 2.0
            J[2 * i:2 * i + 2, 2 * j:2 * j + 2] = out
    return J


def ideal_choi(U) -> np.ndarray:
    return choi_from_ptm(_ptm(U))


def _psd_sqrt(A):
    w, V = np.linalg.eigh(0.5 * (A + A.conj().T))
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.conj().T


def _pure_state(rho, tol=1e-12):
    """Dominant eigenvector if ``rho`` has rank one, else None."""
    w, V = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    return V[:, -1] if w[-2] <= tol * w[-1] else None


def channel_fidelity(choi, reference) -> float:
    """Uhlmann fidelity between the trace-normalized Choi matrices.

    When either matrix is pure the fidelity is the expectation value in that
    state, which avoids square roots of round-off eigenvalues.
    """
    rho = np.asarray(choi) / np.trace(choi).real
    sigma = np.asarray(reference) / np.trace(reference).real
    for a, b in ((sigma, rho), (rho, sigma)):
        psi = _pure_state(a)
        if psi is not None:
            return float(min(1.0, max(0.0, (psi.conj() @ b @ psi).real)))
    s = _psd_sqrt(rho)
    return float(min(1.0, np.trace(_psd_sqrt(s @ sigma @ s)).real ** 2))


def project_cptp(J) -> np.ndarray:
    """Hermitian part, negative eigenvalues clipped, trace rescaled to 2.

    The partial-trace (trace-preserving) condition is not imposed beyond the
    overall trace.
    """
    w, V = np.linalg.eigh(0.5 * (J + J.conj().T))
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise ReconstructionError('reconstructed Choi matrix has no positive part')
    out = (V * w) @ V.conj().T
    return 2.0 * out / np.trace(out).real


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    """Reconstructed channel; ``choi`` is Hermitian PSD with trace 2."""

    choi: np.ndarray
    channel_fidelity: float
    ptm: np.ndarray
    ideal: np.ndarray
    normalization: str = 'trace=2'

    @property
    def infidelity(self) -> float:
        return 1.0 - self.channel_fidelity


_PREP_BLOCH = np.array([[0, 0, 1], [0, 0, -1], [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]],
                       dtype=float)


def pulse_executor(pulse: PulseWaveform) -> Callable:
    """``noise -> U(T_g)`` for a single pulse."""
    return lambda noise: propagate(pulse, noise)


def program_executor(program: Sequence) -> Callable:
    """``noise -> U`` for a time-ordered program of pulses and virtual-Z angles."""
    def run(noise):
        U = IDENTITY
        for item in program:
            U = (rz(float(item)) if np.isscalar(item) else propagate(item, noise)) @ U
        return U
    return run


def qpt(executor: Callable, noise: NoisePoint = NoisePoint(), shots=None, target=None,
        rng_seed: int = 0, spam: tuple = (0.0, 0.0),
        preparations: np.ndarray = _PREP_BLOCH) -> ChannelEstimate:
    """Process tomography by linear inversion.

    Prepares the six Pauli eigenstates, measures ``<X>, <Y>, <Z>`` of each
    output (exactly when ``shots`` is None, otherwise by binomial sampling),
    inverts for the Pauli transfer matrix and projects the resulting Choi
    matrix onto CPTP form.  ``spam = (p_prep, p_meas)`` depolarizes the
    prepared states and flips readouts with the given probabilities.
    """
    kraus = _kraus(executor(noise))
    R_true = _ptm(kraus)
    prep = np.asarray(preparations, dtype=float)
    p_prep, p_meas = spam
    bin_ = np.vstack([np.ones(len(prep)), (1.0 - p_prep) * prep.T])
    bout = R_true @ bin_
    expect = (1.0 - 2.0 * p_meas) * bout[1:]
    if shots is not None:
        shots = int(shots)
        if shots < 1:
            raise DomainError('shots must be positive')
        rng = np.random.default_rng(rng_seed)
        ups = rng.binomial(shots, np.clip((1.0 + expect) / 2.0, 0.0, 1.0))
        expect = 2.0 * ups / shots - 1.0
    ideal_in = np.vstack([np.ones(len(prep)), prep.T])
    if np.linalg.matrix_rank(ideal_in, tol=1e-9) < 4:
        raise ReconstructionError('preparations do not span the Bloch space',
                                  rank=int(np.linalg.matrix_rank(ideal_in, tol=1e-9)))
    measured = np.vstack([np.ones(len(prep)), expect])
    R = measured @ np.linalg.pinv(ideal_in)
    choi = project_cptp(choi_from_ptm(R))
    if target is None:
        target = kraus[0] if len(kraus) == 1 else IDENTITY
    ref = ideal_choi(target)
    return ChannelEstimate(choi, channel_fidelity(choi, ref), R, ref)


def save_choi_csv(estimate: ChannelEstimate | np.ndarray, path):
    J = estimate.choi if isinstance(estimate, ChannelEstimate) else np.asarray(estimate)
    with open(path, 'w') as f:
        f.write('i,j,re,im\n')
        for i in range(4):
            for j in range(4):
                f.write(f'{i},{j},{float(J[i, j].real)!r},{float(J[i, j].imag)!r}\n')


# -- randomized benchmarking ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class Gateset:
    """Pulses realizing X and SX; Z rotations are virtual."""

    x: PulseWaveform
    sx: PulseWaveform
    name: str = ''

    def noisy(self, noise: NoisePoint) -> dict:
        return {'X': propagate(self.x, noise), 'SX': propagate(self.sx, noise)}

    def hashes(self) -> dict:
        return {'X': pulse_hash(self.x), 'SX': pulse_hash(self.sx)}


def square_gate(name: str, tg: float = 60e-9, samples: int | None = None) -> PulseWaveform:
    """Constant-amplitude pulse for ``'X'``, ``'SX'`` or ``'H'`` lasting ``tg``.

    H is a pi rotation about ``(x + z)/sqrt(2)``: drive and detuning are equal.
    """
    k = samples or max(16, int(round(tg / DEFAULT_DT)))
    if name == 'H':
        omega, delta = math.pi / math.sqrt(2), math.pi / math.sqrt(2)
    elif name in ('X', 'SX'):
        omega, delta = (math.pi if name == 'X' else math.pi / 2), 0.0
    else:
        raise DomainError(f"square pulses exist for 'X', 'SX' and 'H', not {name!r}")
    base = PulseWaveform(np.full(k, omega), np.zeros(k), delta, 1.0, omega, f'square_{name}')
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        return scale_pulse(base, tg=tg)


def square_gateset(tg: float = 60e-9, samples: int | None = None) -> Gateset:
    """Constant-amplitude X and SX pulses of duration ``tg``."""
    return Gateset(square_gate('X', tg, samples), square_gate('SX', tg, samples), 'square')


def pulse_hash(pulse: PulseWaveform) -> str:
    return hashlib.sha256(pulse_to_json(pulse).encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class RBCircuits:
    """``sequences[i]`` holds Clifford indices (inverse last) for ``(lengths[i], seeds[i])``."""

    lengths: tuple
    n_seeds: int
    rng_seed: int
    sequences: tuple


def rb_sequences(lengths: Sequence[int] = DEFAULT_LENGTHS, n_seeds: int = 5,
                 rng_seed: int = 0) -> RBCircuits:
    """Random Clifford sequences closed by the exact group inverse."""
    lengths = tuple(int(m) for m in lengths)
    if not lengths or min(lengths) < 1 or max(lengths) > MAX_LENGTH:
        raise DomainError(f'sequence lengths must lie in [1, {MAX_LENGTH}]')
    if n_seeds < 2:
        raise DomainError('need at least two seeds per length')
    mul = clifford_products()
    seqs = []
    for i, m in enumerate(lengths):
        for s in range(n_seeds):
            rng = np.random.default_rng(np.random.SeedSequence([rng_seed, i, s]))
            idx = rng.integers(0, 24, size=m)
            total = 0
            for c in idx:
                total = mul[c, total]
            seqs.append(np.append(idx, clifford_inverse(int(total))))
    return RBCircuits(lengths, n_seeds, rng_seed, tuple(seqs))


@dataclass(frozen=True, eq=False)
class RBResult:
    lengths: np.ndarray
    survival: np.ndarray
    survival_sem: np.ndarray
    raw: np.ndarray
    A: float
    p: float
    B: float
    epc: float
    epc_std: float
    covariance: np.ndarray = field(repr=False, default=None)


def _depolarizing_ptm(p):
    return np.diag([1.0, p, p, p])


def _clifford_ptms(gateset, noise, compilation, depolarizing):
    ops = gateset.noisy(noise) if gateset is not None else {'X': SIGMA_X, 'SX': SQRT_X}
    out = []
    for c in clifford_table():
        if compilation == 'native':
            prog = c.native
        else:
            t1, t2, t3 = c.decomposition
            prog = (('Z', t3), ('SX',), ('Z', t2), ('SX',), ('Z', t1))
        U = IDENTITY
        for op in prog:
            U = (rz(op[1]) if op[0] == 'Z' else ops[op[0]]) @ U
        R = _ptm(U)
        if depolarizing is not None:
            R = _depolarizing_ptm(depolarizing) @ R
        out.append(R)
    return np.array(out)


def _decay(m, A, p, B):
    return A * p ** m + B


def fit_decay(lengths, survival, sem=None) -> tuple:
    """Fit ``A p^m + B``; returns ``(A, p, B, covariance)``."""
    m = np.asarray(lengths, dtype=float)
    y = np.asarray(survival, dtype=float)
    if not np.all(np.isfinite(y)):
        raise FitError('non-finite survival data', survival=y.tolist())
    if len(np.unique(m)) < 3:
        raise FitError('need at least three distinct lengths for A p^m + B',
                       lengths=m.tolist(), survival=y.tolist())
    if np.all(np.abs(y - 1.0) < 1e-12):
        return 0.5, 1.0, 0.5, np.zeros((3, 3))
    with np.errstate(divide='ignore', invalid='ignore'):
        guesses = np.clip((y - 0.5) / 0.5, 1e-12, 1.0) ** (1.0 / m)
    p0 = float(np.clip(np.median(guesses), 0.5, 1.0 - 1e-12))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', OptimizeWarning)
            popt, pcov = curve_fit(_decay, m, y, p0=[0.5, p0, 0.5],
                                   bounds=([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]),
                                   method='trf', x_scale=[1.0, 1e-3, 1.0],
                                   xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f'decay fit failed: {exc}', lengths=m.tolist(), survival=y.tolist()) from None
    if not np.all(np.isfinite(popt)):
        raise FitError('decay fit produced non-finite parameters', lengths=m.tolist(),
                       survival=y.tolist())
    return float(popt[0]), float(popt[1]), float(popt[2]), pcov


def rb_run(circuits: RBCircuits, gateset: Gateset | None = None,
           noise: NoisePoint = NoisePoint(), shots=None, rng_seed: int = 0,
           compilation: str = 'native', depolarizing: float | None = None) -> RBResult:
    """Execute RB circuits and fit the survival decay.

    ``gateset=None`` uses ideal X and SX.  ``depolarizing`` appends a
    gate-independent depolarizing channel with parameter ``p`` after every
    Clifford.  Survival is the final population of ``|0>``; in exact mode it
    is computed from the channel, otherwise by binomial sampling.
    """
    if compilation not in ('native', 'canonical'):
        raise DomainError("compilation must be 'native' or 'canonical'")
    if depolarizing is not None and not 0.0 <= depolarizing <= 1.0:
        raise DomainError('depolarizing parameter must lie in [0, 1]')
    R = _clifford_ptms(gateset, noise, compilation, depolarizing)
    lengths = np.array(circuits.lengths)
    k = circuits.n_seeds
    raw = np.empty((len(lengths), k))
    for i in range(len(lengths)):
        seqs = np.array(circuits.sequences[i * k:(i + 1) * k])
        v = np.tile([1.0, 0.0, 0.0, 1.0], (k, 1))
        rows = np.arange(k)
        for step in range(seqs.shape[1]):
            v = np.einsum('kij,kj->ki', R[seqs[:, step]], v)
        raw[i] = 0.5 * (v[rows, 0] + v[rows, 3])
    raw = np.clip(raw, 0.0, 1.0)
    if shots is not None:
        rng = np.random.default_rng(rng_seed)
        raw = rng.binomial(int(shots), raw) / int(shots)
    mean = raw.mean(axis=1)
    sem = raw.std(axis=1, ddof=1) / math.sqrt(k)
    tol = 3.0 * math.hypot(sem[0], sem[-1]) + 1e-9
    if mean[-1] - mean[0] > tol:
        raise FitError('survival increases with sequence length', lengths=lengths.tolist(),
                       survival=mean.tolist())
    A, p, B, cov = fit_decay(lengths, mean, sem)
    epc = (1.0 - p) / 2.0
    std = 0.5 * math.sqrt(max(0.0, cov[1, 1])) if np.all(np.isfinite(cov)) else float('inf')
    return RBResult(lengths, mean, sem, raw, A, p, B, epc, std, cov)


# -- heatmaps ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Heatmap:
    """Metric per grid point; rows follow ``delta_z``, columns follow ``eps``."""

    values: np.ndarray
    eps: tuple
    delta_z: tuple
    protocol: str
    metric: str
    metadata: dict


def _heatmap_cell(args):
    protocol, payload, eps, dz = args
    noise = NoisePoint(eps, dz)
    if protocol == 'rb':
        circuits, gateset, compilation = payload
        return rb_run(circuits, gateset, noise, compilation=compilation).epc
    executor, target = payload
    return qpt(executor, noise, target=target).infidelity


def noise_heatmap(gateset=None, eps=None, delta_z=None, protocol: str = 'rb', *,
                  circuits: RBCircuits | None = None, executor=None, target=None,
                  compilation: str = 'native', jobs: int = 1, metadata: dict | None = None
                  ) -> Heatmap:
    """Sweep a protocol over an ``(eps, delta_z)`` grid.

    ``rb`` reports EPC for ``gateset`` (default grid: the six amplitude and six
    detuning values of the RB sweep); ``qpt`` reports channel infidelity of
    ``executor`` against ``target`` (default grid: +-20 % in 5 % steps, with
    detuning relative to the 17.1 MHz reference).
    """
    if protocol == 'rb':
        eps = RB_EPS_GRID if eps is None else eps
        delta_z = RB_DZ_GRID if delta_z is None else delta_z
        circuits = circuits or rb_sequences()
        payload = (circuits, gateset, compilation)
        metric = 'epc'
        meta = {'gateset': gateset.hashes() if gateset is not None else 'ideal',
                'lengths': list(circuits.lengths), 'n_seeds': circuits.n_seeds,
                'rng_seed': circuits.rng_seed, 'compilation': compilation}
    elif protocol == 'qpt':
        eps = QPT_EPS_GRID if eps is None else eps
        delta_z = QPT_DZ_GRID if delta_z is None else delta_z
        if executor is None:
            if gateset is None:
                raise DomainError('qpt heatmap needs an executor or a pulse')
            executor = pulse_executor(gateset) if isinstance(gateset, PulseWaveform) \
                else gateset
        if target is None:
            raise DomainError('qpt heatmap needs a target unitary')
        payload = (executor, np.asarray(target, dtype=complex))
        metric = 'channel_infidelity'
        meta = {'gateset': pulse_hash(gateset) if isinstance(gateset, PulseWaveform) else None}
    else:
        raise DomainError(f"protocol must be 'rb' or 'qpt', got {protocol!r}")
    eps = tuple(float(e) for e in eps)
    delta_z = tuple(float(d) for d in delta_z)
    tasks = [(protocol, payload, e, d) for d in delta_z for e in eps]
    if jobs > 1 and protocol == 'rb':
        import multiprocessing
        from concurrent.futures import ProcessPoolExecutor
        # spawn: the parent may already run JAX threads, which fork does not survive
        with ProcessPoolExecutor(jobs, mp_context=multiprocessing.get_context('spawn')) as ex:
            cells = list(ex.map(_heatmap_cell, tasks))
    else:
        cells = [_heatmap_cell(t) for t in tasks]
    values = np.array(cells).reshape(len(delta_z), len(eps))
    meta.update({'protocol': protocol, 'metric': metric, 'eps': list(eps),
                 'delta_z_rad_s': list(delta_z)})
    meta.update(metadata or {})
    return Heatmap(values, eps, delta_z, protocol, metric, meta)


def save_heatmap(hm: Heatmap, csv_path, meta_path=None):
    """CSV: header of eps values, first column delta_z (rad/s); JSON metadata."""
    with open(csv_path, 'w') as f:
        f.write('delta_z_rad_s\\eps,' + ','.join(repr(e) for e in hm.eps) + '\n')
        for d, row in zip(hm.delta_z, hm.values):
            f.write(repr(d) + ',' + ','.join(repr(float(v)) for v in row) + '\n')
    if meta_path is not None:
        with open(meta_path, 'w') as f:
            json.dump(hm.metadata, f, indent=2, sort_keys=True)
            f.write('\n')
