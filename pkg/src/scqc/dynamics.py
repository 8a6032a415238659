"""Two-level dynamics of sampled pulses under quasi-static noise.

Waveforms are piecewise constant: sample ``k`` holds the field on the slice
``[k dt, (k+1) dt]``.  Each slice is exponentiated in closed form, so the
propagator is exact for the stored representation.  The noisy drive-frame
Hamiltonian is

    H(t) = (Delta + dz)/2 sz + (1 + eps) Omega(t)/2 (cos Phi sx + sin Phi sy).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError

__all__ = [
    'SIGMA_X', 'SIGMA_Y', 'SIGMA_Z', 'IDENTITY', 'PAULIS', 'REFERENCE_FIELD',
    'NoisePoint', 'step_unitaries', 'propagate', 'propagate_path', 'magnus_pi1',
    'gate_fidelity', 'gate_infidelity', 'infidelity_scan', 'rz', 'vector_to_operator',
    'operator_to_vector', 'su2_normalize', 'lab_hamiltonian',
]

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = np.array([SIGMA_X, SIGMA_Y, SIGMA_Z])

#: reference drive used to quote detuning noise in percent (17.1 MHz)
REFERENCE_FIELD = 2 * math.pi * 17.1e6


@dataclass(frozen=True)
class NoisePoint:
    """Quasi-static noise: relative amplitude error and additive detuning."""

    eps: float = 0.0
    delta_z: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.eps) and math.isfinite(self.delta_z)):
            raise InputError('noise parameters must be finite')
        if self.eps <= -1.0:
            raise InputError('eps must exceed -1 so the drive keeps its sign', eps=self.eps)

    @classmethod
    def from_percent(cls, eps_percent=0.0, delta_z_percent=0.0, reference=REFERENCE_FIELD):
        return cls(eps_percent / 100.0, delta_z_percent / 100.0 * reference)


def vector_to_operator(v) -> np.ndarray:
    """``v . sigma`` for a 3-vector (or a stack of them)."""
    return np.tensordot(np.asarray(v, dtype=complex), PAULIS, axes=([-1], [0]))


def operator_to_vector(A) -> np.ndarray:
    """Pauli components of a traceless Hermitian 2x2 operator."""
    A = np.asarray(A)
    return np.real(np.einsum('...ij,kji->...k', A, PAULIS)) / 2.0


def rz(theta: float) -> np.ndarray:
    """``exp(-i theta sz / 2)``."""
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def su2_normalize(U) -> np.ndarray:
    """Remove the global phase so that ``det U = 1``."""
    U = np.asarray(U, dtype=complex)
    return U / np.sqrt(np.linalg.det(U))


def _fields(pulse, noise: NoisePoint):
    omega = np.asarray(pulse.omega, dtype=float)
    phi = np.asarray(pulse.phi, dtype=float)
    if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(phi))
            and math.isfinite(pulse.delta)):
        raise InputError('pulse contains non-finite samples', name=getattr(pulse, 'name', ''))
    amp = (1.0 + noise.eps) * omega
    hx = amp * np.cos(phi)
    hy = amp * np.sin(phi)
    hz = np.full_like(omega, pulse.delta + noise.delta_z)
    return np.stack([hx, hy, hz], axis=-1)


def _rotation_steps(h, dt):
    """Closed-form ``exp(-i dt (h . sigma)/2)`` for every row of ``h``."""
    w = np.linalg.norm(h, axis=-1)
    half = 0.5 * w * dt
    with np.errstate(invalid='ignore', divide='ignore'):
        m = np.where(w[:, None] > 0, h / w[:, None], 0.0)
    c = np.cos(half)
    s = np.sin(half)
    U = np.empty((len(h), 2, 2), dtype=complex)
    U[:, 0, 0] = c - 1j * s * m[:, 2]
    U[:, 1, 1] = c + 1j * s * m[:, 2]
    U[:, 0, 1] = -1j * s * (m[:, 0] - 1j * m[:, 1])
    U[:, 1, 0] = -1j * s * (m[:, 0] + 1j * m[:, 1])
    return U, w, m


def step_unitaries(pulse, noise: NoisePoint = NoisePoint()) -> np.ndarray:
    """Per-sample propagators, shape ``(M, 2, 2)``."""
    return _rotation_steps(_fields(pulse, noise), pulse.dt)[0]


def _ordered_product(U: np.ndarray) -> np.ndarray:
    """``U[-1] @ ... @ U[0]`` by pairwise reduction."""
    while len(U) > 1:
        if len(U) % 2:
            U = np.concatenate([U, IDENTITY[None]])
        U = U[1::2] @ U[0::2]
    return U[0]


def _prefix_products(U: np.ndarray) -> np.ndarray:
    """``P[k] = U[k-1] @ ... @ U[0]`` with ``P[0] = I`` (Hillis-Steele scan)."""
    P = U.copy()
    d = 1
    while d < len(P):
        P[d:] = P[d:] @ P[:-d]
        d *= 2
    return np.concatenate([IDENTITY[None], P])


def propagate(pulse, noise: NoisePoint = NoisePoint()) -> np.ndarray:
    """Final propagator ``U(T_g)`` of ``pulse`` under ``noise``."""
    return _ordered_product(step_unitaries(pulse, noise))


def propagate_path(pulse, noise: NoisePoint = NoisePoint()) -> np.ndarray:
    """Propagators at every slice boundary, shape ``(M+1, 2, 2)``."""
    return _prefix_products(step_unitaries(pulse, noise))


def _slice_integrals(v, w, m, dt):
    """``int_0^dt U(s)^dag (v . sigma) U(s) ds`` as 3-vectors, one per slice."""
    wdt = w * dt
    small = wdt < 1e-4
    with np.errstate(invalid='ignore', divide='ignore'):
        S = np.where(small, dt * (1 - wdt**2 / 6 + wdt**4 / 120), np.sin(wdt) / w)
        C = np.where(small, dt * (wdt / 2 - wdt**3 / 24), (1 - np.cos(wdt)) / w)
    vm = np.einsum('ij,ij->i', v, m)
    return (v * S[:, None] - np.cross(m, v) * C[:, None]
            + m * (vm * (dt - S))[:, None])


def magnus_pi1(pulse) -> tuple:
    """First-order Magnus coefficients of the noise-free evolution.

    Returns ``(D, A)`` with ``D = int U0^dag sz U0 dt`` (coefficient of
    ``dz/2``) and ``A = int U0^dag Omega (cos Phi sx + sin Phi sy) U0 dt``
    (coefficient of ``eps/2``).  Both integrals are exact per slice.
    """
    h = _fields(pulse, NoisePoint())
    U, w, m = _rotation_steps(h, pulse.dt)
    P = _prefix_products(U)[:-1]
    zhat = np.broadcast_to([0.0, 0.0, 1.0], h.shape)
    transverse = h.copy()
    transverse[:, 2] = 0.0
    out = []
    for v in (zhat, transverse):
        W = vector_to_operator(_slice_integrals(v, w, m, pulse.dt))
        out.append(np.sum(np.conj(np.swapaxes(P, 1, 2)) @ W @ P, axis=0))
    return tuple(out)


def _check_unitary(U, tol=1e-6):
    U = np.asarray(U, dtype=complex)
    if U.shape != (2, 2) or np.abs(U.conj().T @ U - IDENTITY).max() > tol:
        raise InputError('matrix is not a 2x2 unitary')
    return U


def gate_infidelity(U, V) -> float:
    """``1 - F`` with ``F = (|Tr(V^dag U)|^2 + 2) / 6``; phase invariant."""
    U, V = _check_unitary(U), _check_unitary(V)
    tr = np.trace(V.conj().T @ U)
    return float(max(0.0, (4.0 - abs(tr)**2) / 6.0))


def gate_fidelity(U, V) -> float:
    """Average gate fidelity of a single-qubit unitary against a target."""
    return 1.0 - gate_infidelity(U, V)


def infidelity_scan(pulse, target, axis: str, magnitudes) -> np.ndarray:
    """Infidelity ``1 - F`` along one noise axis (``'eps'`` or ``'delta_z'``)."""
    if axis not in ('eps', 'delta_z'):
        raise DomainError(f"axis must be 'eps' or 'delta_z', got {axis!r}")
    out = []
    for mag in magnitudes:
        noise = NoisePoint(**{axis: float(mag)})
        out.append(gate_infidelity(propagate(pulse, noise), target))
    return np.array(out)


def lab_hamiltonian(t: float, omega: float, phi: float, qubit_frequency: float,
                    drive_frequency: float) -> np.ndarray:
    """Lab-frame drive ``-wq/2 sz + Omega cos(wd t - Phi) sx``.

    Moving the state into the drive frame, ``psi -> exp(-i wd t sz/2) psi``,
    and dropping the terms rotating at ``2 wd`` gives ``H0`` with
    ``Delta = wd - wq``.
    """
    return (-0.5 * qubit_frequency * SIGMA_Z
            + omega * math.cos(drive_frequency * t - phi) * SIGMA_X)
