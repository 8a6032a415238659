"""Robust gate synthesis with a Bézier curve ansatz.

The curve is built so that the hard requirements hold for every parameter
vector the optimizer can produce:

* closure: the first and last control points coincide (dephasing
  robustness to first order);
* gate fixing: the end tangents make the polar angle of the target, and
  the remaining two Euler angles are absorbed exactly by the detuning and
  the initial drive phase (see :func:`scqc.pulsegen.align_gate`).

The optimizer then moves the interior control points to minimize a
weighted cost (peak drive, detuning, rise, smoothness) and, in ``doubly``
mode, imposes the zero-area condition as an equality constraint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import jax
import jax.numpy as jnp
from scipy.optimize import minimize

from . import dynamics
from .dynamics import magnus_pi1, propagate
from .errors import ConvergenceError, DomainError
from .pulsegen import (PulseWaveform, _drive_axes, align_gate, fields_from_geometry,
                       geometric_propagator)
from .spacecurve import DEFAULT_SAMPLES, SpaceCurve, _gauss_panels, bernstein, frenet_trace

jax.config.update('jax_enable_x64', True)

__all__ = ['GateTarget', 'CostWeights', 'SynthesisResult', 'Certificate', 'synthesize',
           'certify', 'fix_gate', 'GATES', 'square_pulse']

GATE_TOL = 1e-8
CLOSURE_TOL = 1e-7
AREA_TOL = 1e-5
MAGNUS_TOL = 1e-5

# exponent of the smooth peak-drive surrogate; the singly-robust problem is a
# pure peak minimization and needs a sharper one
_PEAK_NORM = {'doubly': 16, 'detuning_only': 48}

_SQ2 = math.sqrt(0.5)
GATES = {
    'I': np.eye(2, dtype=complex),
    'X': np.array([[0, 1], [1, 0]], dtype=complex),
    'SX': 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]]),
    'H': _SQ2 * np.array([[1, 1], [1, -1]], dtype=complex),
}


@dataclass(frozen=True, eq=False)
class GateTarget:
    name: str
    unitary: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.unitary, dtype=complex)
        if U.shape != (2, 2) or np.abs(U.conj().T @ U - np.eye(2)).max() > 1e-12:
            raise DomainError('gate target must be a 2x2 unitary')
        object.__setattr__(self, 'unitary', U)

    @classmethod
    def named(cls, name: str) -> 'GateTarget':
        try:
            return cls(name, GATES[name])
        except KeyError:
            raise DomainError(f'unknown gate {name!r}; known: {sorted(GATES)}') from None

    @property
    def polar_angle(self) -> float:
        """Angle between initial and final tangent the curve must realize."""
        a = abs(dynamics.su2_normalize(self.unitary)[0, 0])
        return 2.0 * math.acos(min(1.0, a))


@dataclass(frozen=True)
class CostWeights:
    w_gate: float = 1.0
    w_closure: float = 1.0
    w_area: float = 1.0
    w_detuning: float = 1.0
    w_drivecap: float = 1.0
    w_rise: float = 1.0
    w_smooth: float = 0.05
    robustness_mode: str = 'doubly'
    #: endpoint curvature allowed before the rise term bites, relative to peak
    rise_threshold: float = 0.05

    def __post_init__(self):
        if self.robustness_mode not in ('doubly', 'detuning_only'):
            raise DomainError(f'unknown robustness mode {self.robustness_mode!r}')
        if self.robustness_mode == 'detuning_only' and self.w_area != 0.0:
            object.__setattr__(self, 'w_area', 0.0)
        if not self.w_gate > 0:
            raise DomainError('w_gate must be positive')
        for k in ('w_closure', 'w_area', 'w_detuning', 'w_drivecap', 'w_rise', 'w_smooth'):
            if getattr(self, k) < 0:
                raise DomainError(f'{k} must be non-negative')

    @classmethod
    def detuning_only(cls, **kw) -> 'CostWeights':
        kw.setdefault('w_drivecap', 1.0)
        kw.setdefault('w_smooth', 0.0)
        kw.setdefault('w_rise', 0.0)
        kw.setdefault('w_detuning', 0.1)
        return cls(w_area=0.0, robustness_mode='detuning_only', **kw)


@dataclass(frozen=True)
class Certificate:
    gate_infidelity: float
    closure: float
    tangent_area: float
    delta_tg: float
    omega_max: float
    dephasing_block: float = float('nan')
    amplitude_block: float = float('nan')
    mode: str = 'doubly'

    @property
    def checks(self) -> dict:
        out = {'gate': self.gate_infidelity <= GATE_TOL, 'closure': self.closure <= CLOSURE_TOL}
        if self.mode == 'doubly':
            out['zero_area'] = self.tangent_area <= AREA_TOL
        if not math.isnan(self.dephasing_block):
            out['dephasing_block'] = self.dephasing_block <= MAGNUS_TOL
        if not math.isnan(self.amplitude_block) and self.mode == 'doubly':
            out['amplitude_block'] = self.amplitude_block <= MAGNUS_TOL
        return out

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ('gate_infidelity', 'closure', 'tangent_area',
                                            'delta_tg', 'omega_max', 'dephasing_block',
                                            'amplitude_block', 'mode')}
        d['checks'] = self.checks
        d['passed'] = self.passed
        return d


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    target: GateTarget
    weights: CostWeights
    curve: SpaceCurve
    pulse: PulseWaveform
    certificates: Certificate
    iterations: int
    evaluations: int
    final_cost: float
    seed: int
    history: tuple = field(default=(), repr=False)


class _Ansatz:
    """Parameter vector <-> control points, plus the curve functionals.

    Control points: ``w_0 = w_n = 0``; ``w_1 = z``; ``w_{n-1} = -b e1`` with
    ``e1 = (sin beta, 0, cos beta)``; the interior ``w_2..w_{n-2}`` is free.
    The parameters are ``[log b, w_2, ..., w_{n-2}]``.  Functionals are
    evaluated on composite Gauss-Legendre nodes of the Bézier parameter and
    differentiated exactly with JAX.
    """

    def __init__(self, order: int, beta: float, target, panels: int = 96, p_norm: int = 16):
        if order < 5:
            raise DomainError('ansatz needs order >= 5')
        self.n = order
        self.beta = beta
        self.e1 = np.array([math.sin(beta), 0.0, math.cos(beta)])
        p = dynamics.su2_normalize(target)[0, 0]
        # pi rotations about a transverse axis leave the detuning free
        self.free_detuning = bool(abs(p) < 1e-9)
        self.target_arg2 = 0.0 if self.free_detuning else float(np.angle(p * p))
        x, wts = _gauss_panels(panels)
        self.x = np.concatenate([[0.0], x.ravel(), [1.0]])
        self.wts = np.concatenate([[0.0], wts.ravel(), [0.0]])
        n = order
        D = [bernstein(n, self.x)]
        for k in (1, 2, 3):
            diff = np.diff(np.eye(n + 1), n=k, axis=0)
            D.append(math.prod(range(n - k + 1, n + 1)) * bernstein(n - k, self.x) @ diff)
        self.D = np.array(D)
        self.p_norm = p_norm
        self._fn = _compile(self)

    @property
    def size(self) -> int:
        return 1 + 3 * (self.n - 3)

    def control_points(self, theta) -> np.ndarray:
        return np.asarray(_control_points(self, np.asarray(theta, dtype=float), np))

    def initial(self, rng) -> np.ndarray:
        n = self.n
        # a random closed loop through the fixed end points
        u = np.linspace(0, 1, n + 1)[2:n - 1]
        k = rng.normal(size=(3, 3)) * 1.5
        pts = (np.sin(np.pi * u)[:, None] * k[0] + np.sin(2 * np.pi * u)[:, None] * k[1]
               + np.sin(3 * np.pi * u)[:, None] * k[2] + 0.3 * rng.normal(size=(n - 3, 3)))
        return np.concatenate([[rng.normal(scale=0.2)], pts.ravel()])

    def terms(self, theta, weights: CostWeights) -> dict:
        out = self._fn['terms'](jnp.asarray(theta), _weight_vector(weights))
        return {k: (np.asarray(v) if np.ndim(v) else float(v)) for k, v in out.items()}

    def cost_and_grad(self, theta, wvec):
        v, g = self._fn['cost_grad'](jnp.asarray(theta), wvec)
        return float(v), np.asarray(g)

    def area(self, theta) -> np.ndarray:
        return np.asarray(self._fn['area'](jnp.asarray(theta)))

    def area_jac(self, theta) -> np.ndarray:
        return np.asarray(self._fn['area_jac'](jnp.asarray(theta)))


def _control_points(ans, theta, xp):
    n = ans.n
    interior = xp.reshape(theta[1:], (n - 3, 3))
    zero = xp.zeros((1, 3))
    first = xp.array([[0.0, 0.0, 1.0]])
    last = -xp.exp(theta[0]) * xp.asarray(ans.e1)[None, :]
    return xp.concatenate([zero, first, interior, last, zero], axis=0)


def _weight_vector(w: CostWeights):
    return jnp.array([w.w_gate, w.w_closure, w.w_area, w.w_detuning, w.w_drivecap,
                      w.w_rise, w.w_smooth, w.rise_threshold])


def _householder(v):
    c = jnp.sum(v * v, axis=-1)
    ok = c > 1e-300
    scale = jnp.where(ok, 2.0 / jnp.where(ok, c, 1.0), 0.0)
    return jnp.eye(3) - scale[:, None, None] * v[:, :, None] * v[:, None, :]


def _tree_product(A):
    """``A[-1] @ ... @ A[0]`` for a stack of static length."""
    k = A.shape[0]
    size = 1 << (k - 1).bit_length()
    A = jnp.concatenate([A, jnp.broadcast_to(jnp.eye(3), (size - k, 3, 3))])
    while A.shape[0] > 1:
        A = A[1::2] @ A[0::2]
    return A[0]


def _compile(ans: _Ansatz) -> dict:
    D = jnp.asarray(ans.D)
    wts = jnp.asarray(ans.wts)
    G = jnp.asarray(_drive_axes(0.0))
    start = jnp.eye(3)[jnp.array([2, 0, 1])]     # rows T0 = z, M1 = x, M2 = y
    e1 = jnp.asarray(ans.e1)
    p = ans.p_norm
    target_arg2 = ans.target_arg2
    free = ans.free_detuning

    def terms(theta, wv):
        W = _control_points(ans, theta, jnp)
        r, d1, d2, d3 = D[0] @ W, D[1] @ W, D[2] @ W, D[3] @ W
        sp2 = jnp.sum(d1 * d1, axis=-1)
        sp = jnp.sqrt(sp2)
        L = wts @ sp
        c = jnp.cross(d1, d2)
        cn = jnp.sqrt(jnp.sum(c * c, axis=-1) + 1e-300)
        area = wts @ (c / sp2[:, None])
        kL = cn / (sp * sp2) * L
        # d(Omega)/dt in unit time t = s / L
        dc = jnp.sum(c * jnp.cross(d1, d3), axis=-1)
        dk_dx = dc / (cn * sp * sp2) - 3.0 * cn * jnp.sum(d1 * d2, axis=-1) / (sp2 * sp2 * sp)
        omega_dot = dk_dx * L * L / sp
        dtw = wts * sp / L
        T = d1 / sp[:, None]
        # Bishop transport of M1 = x along the nodes (double reflection)
        H1 = _householder(r[1:] - r[:-1])
        t_l = jnp.einsum('kij,kj->ki', H1, T[:-1])
        H2 = _householder(T[1:] - t_l)
        m1 = _tree_product(H2 @ H1) @ jnp.array([1.0, 0.0, 0.0])
        m1 = m1 - (m1 @ T[-1]) * T[-1]
        m1 = m1 / jnp.linalg.norm(m1)
        end = jnp.stack([T[-1], m1, jnp.cross(T[-1], m1)])
        # rotation of the curve propagator; arg(a^2) of its SU(2) diagonal
        RU = G @ end.T @ start @ G.T
        arg_a2 = jnp.arctan2(-(RU[1, 0] - RU[0, 1]), RU[0, 0] + RU[1, 1])
        if free:
            delta_tg = jnp.zeros(())
        else:
            delta_tg = jnp.remainder(target_arg2 - arg_a2 + jnp.pi, 2 * jnp.pi) - jnp.pi
        polar = 1.0 - T[-1] @ e1
        om = (dtw @ kL ** p) ** (1.0 / p)
        thr = wv[7] * om
        rise = jnp.maximum(0.0, kL[0] - thr) ** 2 + jnp.maximum(0.0, kL[-1] - thr) ** 2
        smooth = (dtw @ omega_dot ** 2) / om ** 4
        closure = jnp.sum((W[-1] - W[0]) ** 2)
        cost = (wv[0] * polar ** 2 + wv[1] * closure + wv[2] * (area @ area)
                + wv[3] * 10.0 * delta_tg ** 2 + wv[4] * om + wv[5] * rise
                + wv[6] * 100.0 * smooth)
        return dict(cost=cost, L=L, area=area, omega_soft=om, omega_peak=jnp.max(kL),
                    delta_tg=delta_tg, rise=rise, smooth=smooth, polar=polar)

    def cost(theta, wv):
        return terms(theta, wv)['cost']

    def area(theta):
        return terms(theta, jnp.zeros(8))['area']

    return {'terms': jax.jit(terms), 'cost_grad': jax.jit(jax.value_and_grad(cost)),
            'area': jax.jit(area), 'area_jac': jax.jit(jax.jacfwd(area))}


def _run_restart(ansatz, target, weights, rng, maxiter):
    theta0 = ansatz.initial(rng)
    wvec = _weight_vector(weights)
    history = []
    evals = [0]

    def fun(theta):
        evals[0] += 1
        return ansatz.cost_and_grad(theta, wvec)

    def callback(theta):
        f = ansatz.terms(theta, weights)
        history.append((len(history) + 1, float(f['cost']), float(np.linalg.norm(f['area']))))

    constraints = []
    if weights.robustness_mode == 'doubly':
        constraints = [{'type': 'eq', 'fun': ansatz.area, 'jac': ansatz.area_jac}]
    bounds = [(-4.0, 4.0)] + [(-50.0, 50.0)] * (ansatz.size - 1)
    with np.errstate(all='ignore'):
        res = minimize(fun, theta0, jac=True, method='SLSQP', constraints=constraints,
                       bounds=bounds, callback=callback,
                       options={'maxiter': maxiter, 'ftol': 1e-13})
    theta = res.x
    if weights.robustness_mode == 'doubly':
        theta = _project_area(ansatz, theta)
    return theta, ansatz.terms(theta, weights), evals[0], res.nit, history


def _project_area(ansatz, theta, tol=1e-13, steps=20):
    """Minimum-norm Gauss-Newton correction onto the zero-area set."""
    for _ in range(steps):
        a = ansatz.area(theta)
        if np.linalg.norm(a) < tol:
            break
        theta = theta - np.linalg.lstsq(ansatz.area_jac(theta), a, rcond=None)[0]
    return theta


def fix_gate(trace, target, delta_tg=None, phi0=None, name='', iterations=6) -> PulseWaveform:
    """Pulse from a trace with detuning and initial phase solved to hit ``target``.

    Starts from the geometric solution and refines it against the simulated
    piecewise-constant propagator.
    """
    target = np.asarray(target, dtype=complex)
    if delta_tg is None or phi0 is None:
        delta_tg, phi0 = align_gate(geometric_propagator(trace), target)
    pulse = fields_from_geometry(trace, delta_tg, phi0, name)
    for _ in range(iterations):
        U = propagate(pulse)
        if dynamics.gate_infidelity(U, target) < 1e-15:
            break
        d_delta, d_phi = align_gate(U, target)
        # a pi-rotation target leaves the detuning free; keep it where it is
        delta_tg, phi0 = delta_tg + d_delta, phi0 + d_phi
        pulse = fields_from_geometry(trace, delta_tg, phi0, name)
    return pulse


def _certify_parts(curve, pulse, trace, target, mode):
    U = propagate(pulse)
    D, A = magnus_pi1(pulse)
    return Certificate(
        gate_infidelity=dynamics.gate_infidelity(U, target),
        closure=float(np.linalg.norm(trace.closure_residual)),
        tangent_area=float(np.linalg.norm(trace.tangent_area)),
        delta_tg=float(pulse.delta * pulse.gate_time),
        omega_max=float(pulse.omega_max_dimless),
        dephasing_block=float(np.linalg.norm(D, 2)),
        amplitude_block=float(np.linalg.norm(A, 2)),
        mode=mode)


def synthesize(target: GateTarget | str, weights: CostWeights | None = None,
               order: int = 16, seed: int = 0, restarts: int = 4, budget: int = 50_000,
               samples: int = DEFAULT_SAMPLES, jobs: int = 1) -> SynthesisResult:
    """Optimize a closed Bézier curve realizing ``target`` robustly.

    Deterministic given ``(target, weights, order, seed, restarts, budget)``.
    Restart ``i`` draws its starting point from ``SeedSequence([seed, i])``;
    the winner has the lowest cost, ties broken by smaller peak drive and
    then smaller ``|T_g Delta|``.

    Raises
    ------
    ConvergenceError
        If the best restart fails its certificates; the error payload holds
        the best certificates found.
    """
    if isinstance(target, str):
        target = GateTarget.named(target)
    weights = weights or CostWeights()
    if order < 5 or (weights.robustness_mode == 'doubly' and order < 8):
        raise DomainError('order must be >= 5 (>= 8 for doubly robust targets)')
    ansatz = _Ansatz(order, target.polar_angle, target.unitary,
                     p_norm=_PEAK_NORM[weights.robustness_mode])
    # every SLSQP iteration costs at least one cost evaluation
    maxiter = max(5, budget // max(1, restarts))

    def one(i):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        return _run_restart(ansatz, target, weights, rng, maxiter)

    if jobs > 1:
        import multiprocessing
        from concurrent.futures import ProcessPoolExecutor
        # forking after JAX has started its thread pool can deadlock
        ctx = multiprocessing.get_context('spawn')
        with ProcessPoolExecutor(jobs, mp_context=ctx) as ex:
            runs = list(ex.map(_restart_worker, [(order, target, weights, seed, i, maxiter)
                                                 for i in range(restarts)]))
    else:
        runs = [one(i) for i in range(restarts)]

    def finish(run):
        theta, f = run[0], run[1]
        W = ansatz.control_points(theta) / f['L']
        curve = SpaceCurve(W, closed=True)
        trace = frenet_trace(curve, samples)
        pulse = fix_gate(trace, target.unitary, name=target.name)
        cert = _certify_parts(curve, pulse, trace, target.unitary, weights.robustness_mode)
        return curve, pulse, cert

    # a low cost alone can hide a kink the sampled pulse does not resolve
    finished = [finish(run) for run in runs]

    def rank(i):
        f, cert = runs[i][1], finished[i][2]
        return (not cert.passed, round(f['cost'], 12), round(float(f['omega_peak']), 12),
                abs(f['delta_tg']))

    best = min(range(len(runs)), key=rank)
    theta, f, _, nit, history = runs[best]
    curve, pulse, cert = finished[best]
    evals = sum(r[2] for r in runs)
    result = SynthesisResult(target, weights, curve, pulse, cert, nit, evals,
                             float(f['cost']), seed, tuple(history))
    if not cert.passed:
        raise ConvergenceError('synthesis did not meet its certificates',
                               certificates=cert.as_dict(), result=result)
    return result


def _restart_worker(args):
    order, target, weights, seed, i, maxiter = args
    ansatz = _Ansatz(order, target.polar_angle, target.unitary,
                     p_norm=_PEAK_NORM[weights.robustness_mode])
    rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
    return _run_restart(ansatz, target, weights, rng, maxiter)


def certify(result_or_pulse, target=None, trace=None, mode=None) -> Certificate:
    """Recompute every certificate from the pulse itself.

    Uses :func:`scqc.dynamics.magnus_pi1` and the simulated propagator, never
    cached optimizer values.  Accepts a :class:`SynthesisResult` or a bare
    pulse together with its target (and optionally its trace).
    """
    if isinstance(result_or_pulse, SynthesisResult):
        res = result_or_pulse
        pulse, target, mode = res.pulse, res.target.unitary, res.weights.robustness_mode
        trace = frenet_trace(res.curve, pulse.samples)
    else:
        pulse = result_or_pulse
        mode = mode or 'doubly'
        if target is None:
            raise DomainError('certify needs a target for a bare pulse')
        target = target.unitary if isinstance(target, GateTarget) else np.asarray(target)
    U = propagate(pulse)
    D, A = magnus_pi1(pulse)
    tg = pulse.gate_time
    closure = np.linalg.norm(dynamics.operator_to_vector(D)) / tg if trace is None \
        else float(np.linalg.norm(trace.closure_residual))
    area = np.linalg.norm(dynamics.operator_to_vector(A)) if trace is None \
        else float(np.linalg.norm(trace.tangent_area))
    return Certificate(
        gate_infidelity=dynamics.gate_infidelity(U, target), closure=float(closure),
        tangent_area=float(area), delta_tg=float(pulse.delta * tg),
        omega_max=float(pulse.omega_max * tg),
        dephasing_block=float(np.linalg.norm(D, 2)) / tg,
        amplitude_block=float(np.linalg.norm(A, 2)), mode=mode)


def square_pulse(angle: float, samples: int = 256, name: str = '') -> PulseWaveform:
    """Constant-amplitude rotation about x by ``angle`` in unit time."""
    om = np.full(samples, float(angle))
    return PulseWaveform(om, np.zeros(samples), 0.0, 1.0, float(angle), name)
