"""Shipped gate curves and the gatesets built from them.

Each entry stores the synthesized curve and its synthesis settings; the
unit-less pulse is rebuilt from the curve on load (Frenet trace plus gate
fixing), which is deterministic and avoids shipping sampled waveforms.
Rebuild the whole library with ``python3 -m scqc.library [directory]``.
"""
from __future__ import annotations

import json
import sys
import warnings
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .pulsegen import PulseWaveform, scale_pulse
from .spacecurve import DEFAULT_SAMPLES, SpaceCurve, curve_from_json, frenet_trace

__all__ = ['ENTRIES', 'GATE_TIMES', 'names', 'curve', 'pulse', 'scaled', 'info', 'robust_gateset',
           'singly_gateset', 'build']

#: name -> (target, robustness mode)
ENTRIES = {
    'x_doubly': ('X', 'doubly'),
    'sx_doubly': ('SX', 'doubly'),
    'h_doubly': ('H', 'doubly'),
    'x_singly': ('X', 'detuning_only'),
    'sx_singly': ('SX', 'detuning_only'),
}

#: physical gate times (s) used for the benchmarks
GATE_TIMES = {'x_doubly': 84e-9, 'sx_doubly': 80e-9, 'h_doubly': 116e-9,
              'x_singly': 60e-9, 'sx_singly': 60e-9}

SYNTH_SETTINGS = {'order': 16, 'seed': 0, 'restarts': 4, 'budget': 50_000}
# the peak-only singly-robust problem settles in better minima at lower order
_ORDER = {'doubly': 16, 'detuning_only': 12}


def names() -> list:
    return list(ENTRIES)


def _file(name):
    if name not in ENTRIES:
        raise KeyError(f'unknown library entry {name!r}; known: {names()}')
    return resources.files('scqc') / 'data' / f'{name}.curve'


@lru_cache(maxsize=None)
def info(name: str) -> dict:
    """The stored curve document (control points, settings, certificates)."""
    return json.loads(_file(name).read_text())


def curve(name: str) -> SpaceCurve:
    return curve_from_json(_file(name).read_text())


@lru_cache(maxsize=None)
def pulse(name: str, samples: int = DEFAULT_SAMPLES) -> PulseWaveform:
    """Unit-less gate-fixed pulse of a library entry."""
    from .shaper import GATES, fix_gate
    target, _ = ENTRIES[name]
    trace = frenet_trace(curve(name), samples)
    return fix_gate(trace, GATES[target], name=target)


def path(name: str, kind: str = 'curve') -> Path:
    if kind != 'curve':
        raise KeyError('only curves are stored; pulses are rebuilt with scqc.library.pulse')
    return Path(str(_file(name)))


def scaled(name: str, tg: float | None = None) -> PulseWaveform:
    """Library pulse stretched to ``tg`` (default: its benchmark gate time)."""
    tg = GATE_TIMES[name] if tg is None else tg
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        return scale_pulse(pulse(name), tg=tg)


def robust_gateset(tg_x: float = GATE_TIMES['x_doubly'], tg_sx: float = GATE_TIMES['sx_doubly']):
    """Doubly-robust X and SX scaled to physical gate times."""
    from .benchmark import Gateset
    return Gateset(scaled('x_doubly', tg_x), scaled('sx_doubly', tg_sx), 'doubly')


def singly_gateset(tg: float = GATE_TIMES['x_singly']):
    """Detuning-only X and SX, both at ``tg``."""
    from .benchmark import Gateset
    return Gateset(scaled('x_singly', tg), scaled('sx_singly', tg), 'singly')


def build(directory=None, jobs: int = 1, log=print) -> dict:
    """Re-synthesize every entry and write ``<name>.curve`` files."""
    from .shaper import CostWeights, synthesize
    from .spacecurve import curve_to_json
    directory = Path(directory) if directory else Path(str(resources.files('scqc') / 'data'))
    directory.mkdir(parents=True, exist_ok=True)
    out = {}
    for name, (target, mode) in ENTRIES.items():
        weights = CostWeights() if mode == 'doubly' else CostWeights.detuning_only()
        settings = dict(SYNTH_SETTINGS, order=_ORDER[mode])
        res = synthesize(target, weights, jobs=jobs, **settings)
        cert = res.certificates.as_dict()
        doc = curve_to_json(res.curve, name=name, target=target, mode=mode,
                            settings=settings, certificates=cert,
                            final_cost=res.final_cost)
        (directory / f'{name}.curve').write_text(doc + '\n')
        log(f"{name}: Tg*Omega_max={cert['omega_max']:.4f} Tg*Delta={cert['delta_tg']:.5f} "
            f"infidelity={cert['gate_infidelity']:.1e} passed={cert['passed']}")
        out[name] = cert
    info.cache_clear()
    pulse.cache_clear()
    return out


if __name__ == '__main__':
    build(sys.argv[1] if len(sys.argv) > 1 else None)
