"""Bézier space curves and their Frenet-Serret geometry.

A :class:`SpaceCurve` is a Bézier curve in R^3 defined by its control
points.  Everything downstream (drive amplitude, drive phase and both
first-order robustness functionals) is read off the curve once it has been
reparameterized by arc length, which is what :func:`frenet_trace` does.

Conventions
-----------
* Curvature is unsigned.  Where it drops below :data:`CURVATURE_FLOOR`
  (in units of ``1/total_length``) the normal is carried across by parallel
  transport; a sign flip of the normal at an inflection point is recorded in
  ``GeometryTrace.curvature_sign`` so that ``dT/ds = sign * kappa * N``.
* Along with the Frenet frame the trace carries a rotation-minimizing
  (Bishop) frame ``(T, M1, M2)`` with ``M1(0) = N(0)``.  The angle of the
  normal inside that frame is the integrated torsion, and it stays well
  defined through inflection points.
* :func:`tangent_area` returns ``int T x dT`` with no factor 1/2.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import comb

from .errors import DegenerateCurveError, DomainError, FrameAmbiguityError

__all__ = [
    'CURVATURE_FLOOR', 'DEFAULT_ORDER', 'DEFAULT_SAMPLES', 'DEFAULT_PANELS',
    'SpaceCurve', 'GeometryTrace', 'ArcLengthMap', 'bernstein', 'eval_curve',
    'eval_derivatives', 'arclength_map', 'frenet_trace', 'closure_residual',
    'tangent_area', 'curve_to_json', 'curve_from_json', 'save_curve', 'load_curve',
]

CURVATURE_FLOOR = 1e-6
DEFAULT_ORDER = 16
DEFAULT_SAMPLES = 4096
DEFAULT_PANELS = 2048
MIN_SPEED = 1e-12
_GL_NODES = 5


@dataclass(frozen=True, eq=False)
class SpaceCurve:
    """Bézier curve ``r(x) = sum_j w_j g_{j,n}(x)`` on ``x in [0, 1]``."""

    control_points: np.ndarray
    closed: bool = False

    def __post_init__(self):
        w = np.array(self.control_points, dtype=float)
        if w.ndim != 2 or w.shape[1] != 3 or w.shape[0] < 2:
            raise DomainError(f'control points must have shape (n+1, 3) with n >= 1, got {w.shape}')
        if not np.all(np.isfinite(w)):
            raise DomainError('control points must be finite')
        w.setflags(write=False)
        object.__setattr__(self, 'control_points', w)
        if self.closed:
            gap = np.linalg.norm(w[-1] - w[0])
            if gap > 1e-9:
                raise DomainError(f'curve flagged closed but |r(1) - r(0)| = {gap:.3e}')

    @property
    def order(self) -> int:
        return self.control_points.shape[0] - 1

    def translated(self, v) -> 'SpaceCurve':
        return SpaceCurve(self.control_points + np.asarray(v, dtype=float), self.closed)

    def rotated(self, R) -> 'SpaceCurve':
        return SpaceCurve(self.control_points @ np.asarray(R, dtype=float).T, self.closed)

    def scaled(self, c: float) -> 'SpaceCurve':
        return SpaceCurve(self.control_points * c, self.closed)


def bernstein(n: int, x) -> np.ndarray:
    """Bernstein basis ``g_{j,n}(x)``, shape ``x.shape + (n+1,)``."""
    x = np.asarray(x, dtype=float)[..., None]
    j = np.arange(n + 1)
    # 0**0 == 1 in numpy, which gives exact endpoint values
    return comb(n, j) * x**j * (1.0 - x)**(n - j)


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError('curve parameter must lie in [0, 1]')
    return x


def eval_curve(curve: SpaceCurve, x) -> np.ndarray:
    """Evaluate the curve at ``x`` (scalar or array)."""
    x = _check_x(x)
    return bernstein(curve.order, x) @ curve.control_points


@lru_cache(maxsize=64)
def _falling(n, k):
    return float(np.prod(np.arange(n - k + 1, n + 1))) if k else 1.0


def _hodograph(w: np.ndarray, k: int) -> np.ndarray:
    """Control points of the k-th derivative (without the falling factorial)."""
    return np.diff(w, n=k, axis=0)


def eval_derivatives(curve: SpaceCurve, x, max_order: int = 3) -> list:
    """Exact derivatives ``d^k r / dx^k`` for ``k = 1..max_order``.

    Uses the hodograph form, i.e. the derivative of a degree-n Bézier curve
    is a degree-(n-1) Bézier curve on the forward differences of the control
    points.
    """
    x = _check_x(x)
    n = curve.order
    if not 1 <= max_order <= min(3, n):
        raise DomainError(f'max_order must be in 1..min(3, n={n}), got {max_order}')
    w = curve.control_points
    out = []
    for k in range(1, max_order + 1):
        out.append(_falling(n, k) * (bernstein(n - k, x) @ _hodograph(w, k)))
    return out


def _gauss_panels(panels: int, nodes: int = _GL_NODES):
    """Nodes and weights of composite Gauss-Legendre on [0, 1]."""
    g, gw = np.polynomial.legendre.leggauss(nodes)
    h = 1.0 / panels
    left = np.arange(panels) * h
    x = left[:, None] + 0.5 * h * (g + 1.0)
    wts = np.broadcast_to(0.5 * h * gw, x.shape)
    return x, wts


@dataclass(frozen=True, eq=False)
class ArcLengthMap:
    """Monotone map ``x -> s`` and its inverse for one curve."""

    curve: SpaceCurve
    breaks: np.ndarray
    cumulative: np.ndarray
    _inverse_guess: PchipInterpolator = field(repr=False)

    @property
    def total_length(self) -> float:
        return float(self.cumulative[-1])

    def speed(self, x) -> np.ndarray:
        d1, = eval_derivatives(self.curve, x, 1)
        return np.linalg.norm(d1, axis=-1)

    def __call__(self, x):
        x = _check_x(x)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        panels = len(self.breaks) - 1
        idx = np.minimum((x * panels).astype(int), panels - 1)
        a = self.breaks[idx]
        g, gw = np.polynomial.legendre.leggauss(_GL_NODES)
        half = 0.5 * (x - a)
        nodes = a[:, None] + half[:, None] * (g + 1.0)
        partial = np.sum(self.speed(nodes) * gw, axis=-1) * half
        s = self.cumulative[idx] + partial
        return s[0] if scalar else s

    def inverse(self, s, newton_steps: int = 3):
        """Curve parameter at arc length ``s`` (Newton-polished Pchip guess)."""
        s = np.asarray(s, dtype=float)
        L = self.total_length
        if np.any(s < -1e-12 * L) or np.any(s > L * (1 + 1e-12)):
            raise DomainError('arc length outside [0, L]')
        s = np.clip(s, 0.0, L)
        x = np.clip(self._inverse_guess(s), 0.0, 1.0)
        for _ in range(newton_steps):
            x = np.clip(x - (self(x) - s) / self.speed(x), 0.0, 1.0)
        return x


def arclength_map(curve: SpaceCurve, quad_points: int = DEFAULT_PANELS) -> ArcLengthMap:
    """Build the arc-length map with composite Gauss-Legendre quadrature.

    ``quad_points`` is the number of quadrature panels (5 nodes each).
    """
    if quad_points < 1:
        raise DomainError('need at least one quadrature panel')
    x, wts = _gauss_panels(quad_points)
    speed = np.linalg.norm(eval_derivatives(curve, x, 1)[0], axis=-1)
    ends = np.linalg.norm(eval_derivatives(curve, np.array([0.0, 1.0]), 1)[0], axis=-1)
    if speed.min() < MIN_SPEED or ends.min() < MIN_SPEED:
        raise DegenerateCurveError('curve speed vanishes; reparameterize or move control points',
                                   min_speed=float(min(speed.min(), ends.min())))
    breaks = np.linspace(0.0, 1.0, quad_points + 1)
    cumulative = np.concatenate([[0.0], np.cumsum(np.sum(speed * wts, axis=-1))])
    guess = PchipInterpolator(cumulative, breaks)
    return ArcLengthMap(curve, breaks, cumulative, guess)


@dataclass(frozen=True, eq=False)
class GeometryTrace:
    """Arc-length sampled Frenet data of a curve.

    Samples sit at the cell midpoints ``t_k = (k + 1/2) / M`` of normalized
    arc length, so that sample ``k`` represents the time slice
    ``[k/M, (k+1)/M]`` of a unit-duration pulse.  Curvature and torsion are
    in units of ``1/length`` of the curve as given; multiply by
    ``total_length`` for the unit-length normalization.
    """

    t: np.ndarray
    x: np.ndarray
    position: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    binormal: np.ndarray
    curvature: np.ndarray
    torsion: np.ndarray
    curvature_sign: np.ndarray
    bishop_angle: np.ndarray
    total_length: float
    closure_residual: np.ndarray
    tangent_area: np.ndarray
    start_frame: np.ndarray
    end_frame: np.ndarray

    @property
    def samples(self) -> int:
        return len(self.t)


def _prefix_matmul(A: np.ndarray) -> np.ndarray:
    """``P[k] = A[k-1] @ ... @ A[0]`` with ``P[0] = I`` (log-depth scan)."""
    P = A.copy()
    d = 1
    while d < len(P):
        P[d:] = P[d:] @ P[:-d]
        d *= 2
    return np.concatenate([np.eye(A.shape[-1])[None], P])


def _householder(v):
    c = np.einsum('ij,ij->i', v, v)
    with np.errstate(invalid='ignore', divide='ignore'):
        scale = np.where(c > 1e-300, 2.0 / c, 0.0)
    return np.eye(3) - scale[:, None, None] * v[:, :, None] * v[:, None, :]


def _double_reflection(points, tangents, m0):
    """Rotation-minimizing frame by the double reflection method.

    Every step is a product of two Householder reflections that depend only
    on the sampled points and tangents, so the transport of ``m0`` is a
    prefix product of fixed 3x3 maps.
    """
    H1 = _householder(np.diff(points, axis=0))
    t_l = np.einsum('kij,kj->ki', H1, tangents[:-1])
    H2 = _householder(tangents[1:] - t_l)
    P = _prefix_matmul(H2 @ H1)
    m = P @ m0
    m -= np.einsum('ij,ij->i', m, tangents)[:, None] * tangents
    return m / np.linalg.norm(m, axis=-1)[:, None]


def tangent_area(curve_or_trace, quad_points: int = DEFAULT_PANELS) -> np.ndarray:
    """Oriented area ``int T x dT`` swept by the unit tangent.

    Accepts a curve or a trace (for a trace the stored value is returned).
    The integrand ``r' x r'' / |r'|^2`` is parameterization invariant, so
    it is integrated directly in the Bézier parameter.
    """
    if isinstance(curve_or_trace, GeometryTrace):
        return curve_or_trace.tangent_area.copy()
    curve = curve_or_trace
    x, wts = _gauss_panels(quad_points)
    x, wts = x.ravel(), wts.ravel()
    d1, d2 = eval_derivatives(curve, x, 2)
    integrand = np.cross(d1, d2) / np.sum(d1 * d1, axis=-1)[:, None]
    return wts @ integrand


def closure_residual(curve_or_trace) -> np.ndarray:
    """``r(end) - r(start)``; zero iff the closed-curve condition holds."""
    if isinstance(curve_or_trace, GeometryTrace):
        return curve_or_trace.closure_residual.copy()
    w = curve_or_trace.control_points
    return w[-1] - w[0]


def frenet_trace(curve: SpaceCurve, M: int = DEFAULT_SAMPLES,
                 quad_points: int = DEFAULT_PANELS,
                 floor: float = CURVATURE_FLOOR) -> GeometryTrace:
    """Sample the Frenet-Serret frame, curvature and torsion by arc length.

    Raises
    ------
    FrameAmbiguityError
        If the curvature stays below ``floor`` over more than 1% of the
        samples; the normal is then not determined by the curve.
    """
    if M < 2:
        raise DomainError('need at least two samples')
    if curve.order < 3:
        raise DomainError('torsion needs a curve of order >= 3')
    amap = arclength_map(curve, quad_points)
    L = amap.total_length
    t = (np.arange(M) + 0.5) / M
    # endpoints are carried along so the transported frame reaches s = L
    x_all = np.concatenate([[0.0], amap.inverse(t * L), [1.0]])
    d1, d2, d3 = eval_derivatives(curve, x_all, 3)
    pos = eval_curve(curve, x_all)
    speed = np.linalg.norm(d1, axis=-1)
    T = d1 / speed[:, None]
    c = np.cross(d1, d2)
    cn = np.linalg.norm(c, axis=-1)
    kappa = cn / speed**3
    defined = kappa * L > floor

    # contiguous undefined runs longer than 1% of the samples are fatal
    run = 0
    for ok in defined:
        run = 0 if ok else run + 1
        if run > max(1, len(defined) // 100):
            raise FrameAmbiguityError('curvature below floor over an extended span',
                                      floor=floor, span=run)

    with np.errstate(divide='ignore', invalid='ignore'):
        tau_raw = np.einsum('ij,ij->i', c, d3) / cn**2
        b_raw = c / cn[:, None]
    n_raw = np.cross(b_raw, T)

    npts = len(x_all)
    if not defined.any():
        raise FrameAmbiguityError('curve is straight; normal undefined', floor=floor)
    first = int(np.argmax(defined))
    # continue the normal through floor points and flip it at inflections so
    # that it stays continuous; sign records dT/ds = sign * kappa * N
    good = np.flatnonzero(defined)
    flips = np.ones(len(good))
    flips[1:] = np.where(np.einsum('ij,ij->i', n_raw[good[1:]], n_raw[good[:-1]]) < 0, -1.0, 1.0)
    last = np.maximum.accumulate(np.where(defined, np.arange(npts), first))
    sign = np.zeros(npts)
    sign[good] = np.cumprod(flips)
    sign = sign[last]
    N = sign[:, None] * n_raw[last]
    N -= np.einsum('ij,ij->i', N, T)[:, None] * T
    N /= np.linalg.norm(N, axis=-1)[:, None]
    tau = tau_raw[last]
    B = np.cross(T, N)

    m1 = _double_reflection(pos, T, N[0])
    m2 = np.cross(T, m1)
    # dT/ds = sign * kappa * N; angle of N inside the Bishop frame
    z = sign * (np.einsum('ij,ij->i', N, m1) + 1j * np.einsum('ij,ij->i', N, m2))
    ang = np.angle(z)
    ang[~defined] = np.nan
    # hold the last defined value across floor points, then unwrap
    ang = ang[last]
    ang = np.unwrap(ang)
    ang -= ang[0]

    inner = slice(1, -1)
    trace = GeometryTrace(
        t=t, x=x_all[inner], position=pos[inner], tangent=T[inner], normal=N[inner],
        binormal=B[inner], curvature=kappa[inner], torsion=tau[inner],
        curvature_sign=sign[inner], bishop_angle=ang[inner], total_length=L,
        closure_residual=closure_residual(curve),
        tangent_area=tangent_area(curve, quad_points),
        start_frame=np.array([T[0], m1[0], m2[0]]),
        end_frame=np.array([T[-1], m1[-1], m2[-1]]),
    )
    return trace


# -- serialization -------------------------------------------------------------

def curve_to_json(curve: SpaceCurve, **extra) -> str:
    doc = {'order': curve.order,
           'control_points': [[float(v) for v in p] for p in curve.control_points],
           'closed': bool(curve.closed)}
    doc.update(extra)
    return json.dumps(doc, indent=1)


def curve_from_json(text: str) -> SpaceCurve:
    doc = json.loads(text)
    w = np.array(doc['control_points'], dtype=float)
    if w.shape[0] != doc['order'] + 1:
        raise DomainError('order does not match number of control points')
    return SpaceCurve(w, bool(doc.get('closed', False)))


def save_curve(curve: SpaceCurve, path, **extra):
    with open(path, 'w') as f:
        f.write(curve_to_json(curve, **extra) + '\n')


def load_curve(path) -> SpaceCurve:
    with open(path) as f:
        return curve_from_json(f.read())
