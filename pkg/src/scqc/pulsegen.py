"""From curve geometry to sampled drive fields, and from unit-less pulses to
physical ones.

The drive-frame error curve of a pulse starts with tangent ``+z`` and with
normal ``(-sin Phi(0), cos Phi(0), 0)``.  For ``Phi(0) = 0`` the initial
normal is therefore ``+y``.  A curve in arbitrary position is mapped into
that frame by :func:`drive_frame_rotation`.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .dynamics import rz, su2_normalize, vector_to_operator
from .errors import CapacityError, DomainError, ResolutionError
from .spacecurve import GeometryTrace

__all__ = [
    'DEFAULT_DT', 'PulseWaveform', 'QubitSpec', 'SnapWarning', 'fields_from_geometry',
    'scale_pulse', 'to_dimensionless', 'resample', 'drive_frame_rotation',
    'geometric_propagator', 'geometric_blocks', 'initial_phase', 'align_gate',
    'pulse_to_json', 'pulse_from_json', 'save_pulse', 'load_pulse', 'save_envelope_csv',
]

#: default hardware sample period, 2/9 ns
DEFAULT_DT = 2e-9 / 9


class SnapWarning(UserWarning):
    """The requested gate time was rounded up to the hardware grid."""


@dataclass(frozen=True, eq=False)
class PulseWaveform:
    """Piecewise-constant drive ``{Omega_k, Phi_k}`` plus a constant detuning.

    In unit-less form ``gate_time == 1`` and fields are in units of
    ``1/T_g``; physical pulses use seconds and rad/s.
    ``omega_max_dimless`` is the invariant product ``T_g * Omega_max``.
    """

    omega: np.ndarray
    phi: np.ndarray
    delta: float
    gate_time: float
    omega_max_dimless: float
    name: str = ''
    physical: bool = False

    def __post_init__(self):
        om = np.array(self.omega, dtype=float)
        ph = np.array(self.phi, dtype=float)
        if om.ndim != 1 or om.shape != ph.shape or len(om) == 0:
            raise DomainError('omega and phi must be 1-d arrays of equal length')
        if np.any(om < 0):
            raise DomainError('drive amplitude must be non-negative')
        if not self.gate_time > 0:
            raise DomainError('gate time must be positive')
        om.setflags(write=False)
        ph.setflags(write=False)
        object.__setattr__(self, 'omega', om)
        object.__setattr__(self, 'phi', ph)
        object.__setattr__(self, 'delta', float(self.delta))

    @property
    def samples(self) -> int:
        return len(self.omega)

    @property
    def dt(self) -> float:
        return self.gate_time / len(self.omega)

    @property
    def omega_max(self) -> float:
        return float(self.omega.max())

    @property
    def times(self) -> np.ndarray:
        """Slice midpoints."""
        return (np.arange(self.samples) + 0.5) * self.dt

    @property
    def envelope(self) -> np.ndarray:
        """``Omega exp(i Phi) / Omega_max`` (modulus at most 1)."""
        return self.omega * np.exp(1j * self.phi) / self.omega_max


@dataclass(frozen=True)
class QubitSpec:
    """Device parameters needed to place a pulse on a qubit (rad/s, s)."""

    qubit_frequency: float
    drive_frequency: float
    max_drive: float = math.inf
    dt_min: float = DEFAULT_DT

    @property
    def detuning(self) -> float:
        return self.drive_frequency - self.qubit_frequency

    def tuned_for(self, pulse: PulseWaveform) -> 'QubitSpec':
        """Same qubit with the drive placed at the pulse's detuning."""
        return replace(self, drive_frequency=self.qubit_frequency + pulse.delta)


def fields_from_geometry(trace: GeometryTrace, delta: float = 0.0, phi0: float = 0.0,
                         name: str = '') -> PulseWaveform:
    """Unit-duration pulse whose error curve is ``trace``.

    ``Omega = kappa`` and ``Phi = phi0 + int tau + delta t`` with the curve
    rescaled to unit length.  The torsion integral is taken from the Bishop
    angle, which also folds the pi jumps of a flipped normal into ``Phi``.
    """
    L = trace.total_length
    omega = trace.curvature * L
    phi = phi0 + trace.bishop_angle + delta * trace.t
    return PulseWaveform(omega, phi, delta, 1.0, float(omega.max()), name)


def to_dimensionless(pulse: PulseWaveform) -> PulseWaveform:
    if not pulse.physical:
        return pulse
    tg = pulse.gate_time
    return PulseWaveform(pulse.omega * tg, pulse.phi, pulse.delta * tg, 1.0,
                         pulse.omega_max_dimless, pulse.name, False)


def scale_pulse(pulse: PulseWaveform, tg: float | None = None, omega_max: float | None = None,
                qubit: QubitSpec | None = None) -> PulseWaveform:
    """Stretch a pulse to a physical gate time or peak Rabi rate.

    Exactly one of ``tg`` (s) and ``omega_max`` (rad/s) is given.  The gate
    time is rounded up to a multiple of ``qubit.dt_min`` (a
    :class:`SnapWarning` is emitted when that changes it), so
    ``T_g * Omega_max`` stays equal to the unit-less product.  The sample
    count is kept; use :func:`resample` to move onto the hardware grid.
    """
    if (tg is None) == (omega_max is None):
        raise DomainError('give exactly one of tg and omega_max')
    qubit = qubit or QubitSpec(0.0, 0.0)
    base = to_dimensionless(pulse)
    product = base.omega_max_dimless
    target = tg if tg is not None else product / omega_max
    if not target > 0:
        raise DomainError('gate time must be positive')
    k = math.ceil(target / qubit.dt_min - 1e-9)
    snapped = k * qubit.dt_min
    if abs(snapped - target) > 1e-12 * target:
        warnings.warn(f'gate time {target:.6g} s snapped up to {snapped:.6g} s '
                      f'({k} x {qubit.dt_min:.6g} s)', SnapWarning, stacklevel=2)
    peak = product / snapped
    if peak > qubit.max_drive * (1 + 1e-12):
        raise CapacityError('peak drive exceeds device limit', requested=peak,
                            limit=qubit.max_drive)
    return PulseWaveform(base.omega / snapped, base.phi, base.delta / snapped, snapped,
                         product, base.name, True)


def resample(pulse: PulseWaveform, dt: float) -> PulseWaveform:
    """Linear resampling onto slices of (approximately) ``dt``.

    The gate time is kept; the slice count is ``round(T_g / dt)``.  The
    first and last samples of both grids are aligned, so the endpoint values
    carry over exactly.
    """
    if not dt > 0:
        raise DomainError('dt must be positive')
    if dt > pulse.gate_time / 16 * (1 + 1e-12):
        raise ResolutionError('sample period too coarse; need at least 16 slices',
                              dt=dt, gate_time=pulse.gate_time)
    k = max(16, int(round(pulse.gate_time / dt)))
    if k == pulse.samples:
        return pulse
    old = np.arange(pulse.samples)
    new = np.linspace(0, pulse.samples - 1, k)
    omega = np.interp(new, old, pulse.omega)
    phi = np.interp(new, old, np.unwrap(pulse.phi))
    omega[[0, -1]] = pulse.omega[[0, -1]]
    phi[[0, -1]] = pulse.phi[[0, -1]]
    # keep the unit-less product as the invariant tag; the peak may move
    return PulseWaveform(omega, phi, pulse.delta, pulse.gate_time, pulse.omega_max_dimless,
                         pulse.name, pulse.physical)


# -- curve frame <-> drive frame ----------------------------------------------

def _drive_axes(phi0):
    """Columns ``(z, n(phi0), b(phi0))`` of the drive-frame reference triad."""
    c, s = math.cos(phi0), math.sin(phi0)
    return np.array([[0.0, -s, -c],
                     [0.0, c, -s],
                     [1.0, 0.0, 0.0]])


def drive_frame_rotation(trace: GeometryTrace, phi0: float = 0.0) -> np.ndarray:
    """Rotation taking curve coordinates to the pulse's error-curve frame."""
    F0 = trace.start_frame.T
    return _drive_axes(phi0) @ F0.T


def _su2_from_rotation(R) -> np.ndarray:
    x, y, z, w = Rotation.from_matrix(R).as_quat()
    return np.array([[w - 1j * z, -1j * x - y],
                     [-1j * x + y, w + 1j * z]])


def initial_phase(trace: GeometryTrace, pulse: PulseWaveform) -> float:
    """``phi0`` used when ``pulse`` was built from ``trace`` (unit-less pulse)."""
    return float(pulse.phi[0] - trace.bishop_angle[0] - pulse.delta * trace.t[0])


def geometric_blocks(trace: GeometryTrace, phi0: float = 0.0) -> tuple:
    """First-order Magnus blocks predicted by the curve alone.

    For the unit-duration pulse of ``trace`` the dephasing block is the
    closure residual and the amplitude block is minus the tangent area, both
    expressed in the drive frame and normalized to unit length.
    """
    R = drive_frame_rotation(trace, phi0)
    L = trace.total_length
    D = vector_to_operator(R @ trace.closure_residual / L)
    A = -vector_to_operator(R @ trace.tangent_area)
    return D, A


def geometric_propagator(trace: GeometryTrace, delta: float = 0.0, phi0: float = 0.0) -> np.ndarray:
    """Noise-free gate ``U0(T_g)`` implied by the curve's end frames.

    With ``U0^dag (v.sigma) U0 = (R v).sigma`` the map ``R`` sends the
    reference triad to the final ``(T, M1, M2)`` Bishop frame.  Detuning
    and initial phase act as z rotations on the left and on both sides.
    """
    G = _drive_axes(0.0)
    R = G @ trace.start_frame @ trace.end_frame.T @ G.T
    Uc = _su2_from_rotation(R.T)
    return rz(delta + phi0) @ Uc @ rz(-phi0)


def align_gate(U, target) -> tuple:
    """``(delta_tg, phi0)`` with ``rz(delta_tg + phi0) U rz(-phi0) ~ target``.

    Only z rotations are available, so the polar angle of ``U`` has to
    match the target already; any mismatch is left as residual infidelity.
    ``delta_tg`` is taken in ``(-pi, pi]``; it is zero whenever the diagonal
    of the target vanishes (pi rotations about a transverse axis).
    """
    a, b = su2_normalize(U)[:, 0]
    p, q = su2_normalize(target)[:, 0]
    s = -2.0 * np.angle(p * np.conj(a))
    d = 2.0 * np.angle(q * np.conj(b))
    gamma = 0.5 * (s - d)
    delta_tg = math.remainder(s, 2 * math.pi)
    return float(delta_tg), float(-gamma)


# -- files ---------------------------------------------------------------------

def pulse_to_json(pulse: PulseWaveform, **extra) -> str:
    doc = {
        'name': pulse.name,
        'units': 'si' if pulse.physical else 'dimensionless',
        'tg_s': pulse.gate_time,
        'dt_s': pulse.dt,
        'delta_rad_s': pulse.delta,
        'omega_max_rad_s': pulse.omega_max,
        'dimensionless': {'tg': 1.0, 'omega_max': pulse.omega_max_dimless},
        'omega_rad_s': [float(v) for v in pulse.omega],
        'phi_rad': [float(v) for v in pulse.phi],
    }
    doc.update(extra)
    return json.dumps(doc)


def pulse_from_json(text: str) -> PulseWaveform:
    doc = json.loads(text)
    return PulseWaveform(np.array(doc['omega_rad_s']), np.array(doc['phi_rad']),
                         doc['delta_rad_s'], doc['tg_s'], doc['dimensionless']['omega_max'],
                         doc.get('name', ''), doc.get('units', 'si') == 'si')


def save_pulse(pulse: PulseWaveform, path, **extra):
    with open(path, 'w') as f:
        f.write(pulse_to_json(pulse, **extra) + '\n')


def load_pulse(path) -> PulseWaveform:
    with open(path) as f:
        return pulse_from_json(f.read())


def save_envelope_csv(pulse: PulseWaveform, path):
    env = pulse.envelope
    with open(path, 'w') as f:
        f.write('real,imag\n')
        for v in env:
            f.write(f'{float(v.real)!r},{float(v.imag)!r}\n')
