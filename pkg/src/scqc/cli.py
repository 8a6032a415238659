"""Command-line front end.

Every command reads options from ``--config <file.json>`` and from flags;
flags win.  Artifacts are written under ``--out-dir`` (default
``$SCQC_OUT`` or ``./out``) and carry the hash of the resolved
configuration plus the seed.  Exit status: 0 on success, 2 for a bad
configuration, 3 for a domain error; failures print a JSON error record on
stderr and write it to ``<out-dir>/error.json`` when possible.

Pulse and curve arguments accept ``builtin:<name>`` for the shipped gate
library (see ``scqc.library``).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .errors import SCQCError

EXIT_CONFIG = 2
EXIT_DOMAIN = 3


class ConfigError(Exception):
    def __init__(self, message, **payload):
        super().__init__(message)
        self.payload = payload


# -- option tables ---------------------------------------------------------------

_COMMON = {'seed': 0, 'out_dir': None, 'jobs': 1, 'name': None}

DEFAULTS = {
    'synth': {'target': None, 'mode': 'doubly', 'order': 16, 'restarts': 4, 'budget': 50_000,
              'samples': 4096, 'weights': {}},
    'certify': {'pulse': None, 'curve': None, 'target': None, 'mode': None},
    'scale': {'pulse': None, 'tg': None, 'omega_max': None, 'qubit_frequency': 0.0,
              'drive_frequency': None, 'max_drive': None, 'dt_min': None, 'resample_dt': None},
    'scan': {'pulse': None, 'target': None, 'axis': 'eps', 'magnitudes': None,
             'logspace': None, 'relative': False},
    'qpt': {'program': None, 'target': None, 'eps': 0.0, 'delta_z': 0.0, 'shots': None},
    'rb': {'gateset': None, 'square_tg': 60e-9, 'eps': 0.0, 'delta_z': 0.0,
           'lengths': None, 'seeds': 5, 'shots': None, 'compilation': 'native'},
    'heatmap': {'protocol': 'rb', 'gateset': None, 'square_tg': 60e-9, 'program': None,
                'target': None, 'eps': None, 'delta_z': None, 'lengths': None, 'seeds': 5,
                'compilation': 'native'},
}


def _floats(text):
    if text is None or isinstance(text, (list, tuple)):
        return text
    return [float(v) for v in str(text).split(',') if v.strip()]


def _ints(text):
    if text is None or isinstance(text, (list, tuple)):
        return text
    return [int(v) for v in str(text).split(',') if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog='scqc', description='Robust single-qubit pulses: '
                                'synthesis, scaling, certification and simulated benchmarks.')
    sub = p.add_subparsers(dest='command', required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        sp.add_argument('--config', help='JSON file with options for this command')
        sp.add_argument('--out-dir', dest='out_dir', help='artifact directory')
        sp.add_argument('--seed', type=int)
        sp.add_argument('--jobs', type=int, help='worker processes')
        sp.add_argument('--name', help='artifact base name')
        return sp

    sp = add('synth', 'synthesize a robust pulse')
    sp.add_argument('--target', help='H, X, SX or I')
    sp.add_argument('--mode', choices=['doubly', 'detuning_only'])
    sp.add_argument('--order', type=int)
    sp.add_argument('--restarts', type=int)
    sp.add_argument('--budget', type=int)
    sp.add_argument('--samples', type=int)
    sp.add_argument('--weights', type=json.loads, help='JSON object of cost weights')

    sp = add('certify', 'recompute robustness certificates of a pulse')
    sp.add_argument('--pulse')
    sp.add_argument('--curve')
    sp.add_argument('--target')
    sp.add_argument('--mode', choices=['doubly', 'detuning_only'])

    sp = add('scale', 'stretch a pulse to a gate time or peak drive')
    sp.add_argument('--pulse')
    sp.add_argument('--tg', type=float, help='gate time (s)')
    sp.add_argument('--omega-max', dest='omega_max', type=float, help='peak Rabi rate (rad/s)')
    sp.add_argument('--qubit-frequency', dest='qubit_frequency', type=float)
    sp.add_argument('--drive-frequency', dest='drive_frequency', type=float)
    sp.add_argument('--max-drive', dest='max_drive', type=float)
    sp.add_argument('--dt-min', dest='dt_min', type=float)
    sp.add_argument('--resample-dt', dest='resample_dt', type=float)

    sp = add('scan', 'infidelity along one noise axis')
    sp.add_argument('--pulse')
    sp.add_argument('--target')
    sp.add_argument('--axis', choices=['eps', 'delta_z'])
    sp.add_argument('--magnitudes', type=_floats, help='comma-separated values')
    sp.add_argument('--logspace', type=_floats, help='start,stop,count')
    sp.add_argument('--relative', action='store_true',
                    help='delta_z magnitudes are fractions of the peak drive')

    sp = add('qpt', 'process tomography of a pulse program')
    sp.add_argument('--program', help='comma-separated pulse files and z=<angle> entries')
    sp.add_argument('--target')
    sp.add_argument('--eps', type=float)
    sp.add_argument('--delta-z', dest='delta_z', type=float, help='rad/s')
    sp.add_argument('--shots', type=int)

    for name, help_ in (('rb', 'randomized benchmarking at one noise point'),
                        ('heatmap', 'sweep a protocol over a noise grid')):
        sp = add(name, help_)
        sp.add_argument('--gateset', help="'x.pulse,sx.pulse' or 'square'")
        sp.add_argument('--square-tg', dest='square_tg', type=float)
        sp.add_argument('--lengths', type=_ints)
        sp.add_argument('--seeds', type=int)
        sp.add_argument('--compilation', choices=['native', 'canonical'])
        if name == 'rb':
            sp.add_argument('--eps', type=float)
            sp.add_argument('--delta-z', dest='delta_z', type=float)
            sp.add_argument('--shots', type=int)
        else:
            sp.add_argument('--protocol', choices=['rb', 'qpt'])
            sp.add_argument('--program')
            sp.add_argument('--target')
            sp.add_argument('--eps', type=_floats)
            sp.add_argument('--delta-z', dest='delta_z', type=_floats)
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cmd = args.command
    conf = dict(_COMMON)
    conf.update(DEFAULTS[cmd])
    given = vars(args).copy()
    given.pop('command')
    path = given.pop('config', None)
    if path is not None:
        try:
            with open(path) as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f'cannot read config: {exc}', path=str(path)) from None
        if not isinstance(doc, dict):
            raise ConfigError('config must be a JSON object', path=str(path))
        if doc.pop('command', cmd) != cmd:
            raise ConfigError('config is for a different command', path=str(path))
        unknown = sorted(set(doc) - set(conf))
        if unknown:
            raise ConfigError(f'unknown config keys: {unknown}', path=str(path))
        conf.update(doc)
    conf.update(given)
    if conf['out_dir'] is None:
        conf['out_dir'] = os.environ.get('SCQC_OUT', 'out')
    if not isinstance(conf['seed'], int):
        raise ConfigError('seed must be an integer')
    return conf


def config_hash(conf: dict) -> str:
    """Hash of everything that determines the artifacts (not paths or jobs)."""
    keep = {k: v for k, v in conf.items() if k not in ('out_dir', 'jobs', 'name')}
    text = json.dumps(keep, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# -- helpers ---------------------------------------------------------------------

def _resolve_path(ref, kind):
    if ref is None:
        raise ConfigError(f'missing --{kind}')
    ref = str(ref)
    if ref.startswith('builtin:'):
        from . import library
        try:
            return library.path(ref.split(':', 1)[1], kind)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
    if not Path(ref).is_file():
        raise ConfigError(f'input file not found: {ref}', path=ref)
    return Path(ref)


def _load_pulse(ref, physical=False):
    """Pulse file or ``builtin:<name>``; ``physical`` scales builtins to their gate time."""
    from .pulsegen import load_pulse
    if str(ref).startswith('builtin:'):
        from . import library
        name = str(ref).split(':', 1)[1]
        if name not in library.ENTRIES:
            raise ConfigError(f'unknown library entry {name!r}; known: {library.names()}')
        return library.scaled(name) if physical \
            else library.pulse(name)
    return load_pulse(_resolve_path(ref, 'pulse'))


def _target(name, fallback=None):
    from .errors import DomainError
    from .shaper import GATES, GateTarget
    name = name or fallback
    if name is None:
        raise ConfigError('missing --target')
    if name not in GATES:
        raise DomainError(f'unknown gate {name!r}; known: {sorted(GATES)}')
    return GateTarget.named(name)


def _gateset(conf):
    from .benchmark import Gateset, square_gateset
    spec = conf['gateset']
    if spec is None or spec == 'square':
        return square_gateset(conf['square_tg'])
    parts = [s for s in str(spec).split(',') if s]
    if len(parts) != 2:
        raise ConfigError("gateset needs two pulse files 'x,sx' or 'square'")
    # noise is in physical units, so builtins run at their library gate times
    x, sx = (_load_pulse(s, physical=True) for s in parts)
    return Gateset(x, sx, 'pulses')


def _program(spec):
    if spec is None:
        raise ConfigError('missing --program')
    items = []
    for part in str(spec).split(','):
        part = part.strip()
        if part.startswith('z='):
            items.append(float(part[2:]))
        elif part:
            items.append(_load_pulse(part, physical=True))
    return items


class _Writer:
    def __init__(self, conf):
        self.conf = conf
        self.dir = Path(conf['out_dir'])
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f'output directory not writable: {exc}') from None
        self.hash = config_hash(conf)
        self.written = []

    @property
    def provenance(self) -> dict:
        return {'config_hash': self.hash, 'seed': self.conf['seed']}

    def path(self, name) -> Path:
        p = self.dir / name
        self.written.append(str(p))
        return p

    def csv(self, name, header, rows):
        with open(self.path(name), 'w', newline='') as f:
            f.write(f"# config_hash={self.hash} seed={self.conf['seed']}\n")
            f.write(header + '\n')
            for row in rows:
                f.write(','.join(v if isinstance(v, str) else repr(v) for v in row) + '\n')

    def json(self, name, doc):
        doc = dict(doc)
        doc['provenance'] = self.provenance
        with open(self.path(name), 'w') as f:
            json.dump(doc, f, indent=2, sort_keys=True, default=_jsonable)
            f.write('\n')


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, complex):
        return [v.real, v.imag]
    return str(v)


# -- commands ----------------------------------------------------------------------

def cmd_synth(conf, out):
    from .pulsegen import save_pulse
    from .shaper import CostWeights, synthesize
    from .spacecurve import save_curve
    target = _target(conf['target'])
    try:
        weights = CostWeights(robustness_mode=conf['mode'], **conf['weights']) \
            if conf['mode'] == 'doubly' else CostWeights.detuning_only(**conf['weights'])
    except TypeError as exc:
        raise ConfigError(f'bad weights: {exc}') from None
    res = synthesize(target, weights, order=conf['order'], seed=conf['seed'],
                     restarts=conf['restarts'], budget=conf['budget'], samples=conf['samples'],
                     jobs=conf['jobs'])
    base = conf['name'] or target.name.lower()
    save_curve(res.curve, out.path(f'{base}.curve'), provenance=out.provenance)
    save_pulse(res.pulse, out.path(f'{base}.pulse'), provenance=out.provenance)
    out.json(f'{base}.cert.json', {'target': target.name, 'mode': conf['mode'],
                                   'certificates': res.certificates.as_dict(),
                                   'iterations': res.iterations, 'evaluations': res.evaluations,
                                   'final_cost': res.final_cost})
    return res.certificates.as_dict()


def cmd_certify(conf, out):
    from .shaper import certify
    from .spacecurve import frenet_trace, load_curve
    pulse = _load_pulse(conf['pulse'])
    target = _target(conf['target'], pulse.name or None)
    trace = None
    if conf['curve'] is not None:
        trace = frenet_trace(load_curve(_resolve_path(conf['curve'], 'curve')), pulse.samples)
    cert = certify(pulse, target, trace=trace, mode=conf['mode'])
    base = conf['name'] or Path(str(conf['pulse']).split(':')[-1]).stem
    report = {'target': target.name, 'certificates': cert.as_dict()}
    out.json(f'{base}.cert.json', report)
    return report


def cmd_scale(conf, out):
    from .pulsegen import DEFAULT_DT, QubitSpec, resample, save_pulse, scale_pulse
    pulse = _load_pulse(conf['pulse'])
    qf = conf['qubit_frequency']
    qubit = QubitSpec(qf, qf if conf['drive_frequency'] is None else conf['drive_frequency'],
                      math.inf if conf['max_drive'] is None else conf['max_drive'],
                      conf['dt_min'] or DEFAULT_DT)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        scaled = scale_pulse(pulse, tg=conf['tg'], omega_max=conf['omega_max'], qubit=qubit)
    if conf['resample_dt'] is not None:
        scaled = resample(scaled, conf['resample_dt'])
    base = conf['name'] or f"{Path(str(conf['pulse']).split(':')[-1]).stem}_{scaled.gate_time * 1e9:.6g}ns"
    save_pulse(scaled, out.path(f'{base}.pulse'), provenance=out.provenance)
    return {'tg_s': scaled.gate_time, 'omega_max_rad_s': scaled.omega_max,
            'tg_omega_max': scaled.omega_max_dimless,
            'warnings': [str(w.message) for w in caught]}


def cmd_scan(conf, out):
    from .dynamics import infidelity_scan
    pulse = _load_pulse(conf['pulse'])
    target = _target(conf['target'], pulse.name or None)
    mags = conf['magnitudes']
    if mags is None:
        if conf['logspace'] is None:
            raise ConfigError('give --magnitudes or --logspace')
        a, b, k = conf['logspace']
        mags = np.logspace(math.log10(a), math.log10(b), int(k))
    mags = np.asarray(_floats(mags) if isinstance(mags, str) else mags, dtype=float)
    values = mags * pulse.omega_max if conf['relative'] and conf['axis'] == 'delta_z' else mags
    inf = infidelity_scan(pulse, target.unitary, conf['axis'], values)
    base = conf['name'] or f"scan_{conf['axis']}"
    out.csv(f'{base}.csv', 'axis,magnitude,infidelity',
            [(conf['axis'], float(m), float(v)) for m, v in zip(values, inf)])
    return {'points': len(values)}


def cmd_qpt(conf, out):
    from .benchmark import program_executor, qpt
    from .dynamics import NoisePoint
    program = _program(conf['program'])
    target = _target(conf['target'])
    est = qpt(program_executor(program), NoisePoint(conf['eps'], conf['delta_z']),
              shots=conf['shots'], target=target.unitary, rng_seed=conf['seed'])
    base = conf['name'] or 'qpt'
    J = est.choi
    out.csv(f'{base}_choi.csv', 'i,j,re,im',
            [(i, j, float(J[i, j].real), float(J[i, j].imag)) for i in range(4) for j in range(4)])
    report = {'target': target.name, 'channel_fidelity': est.channel_fidelity,
              'eps': conf['eps'], 'delta_z_rad_s': conf['delta_z']}
    out.json(f'{base}.json', report)
    return report


def cmd_rb(conf, out):
    from .benchmark import DEFAULT_LENGTHS, rb_run, rb_sequences
    from .dynamics import NoisePoint
    gs = _gateset(conf)
    circuits = rb_sequences(conf['lengths'] or DEFAULT_LENGTHS, conf['seeds'], conf['seed'])
    res = rb_run(circuits, gs, NoisePoint(conf['eps'], conf['delta_z']), shots=conf['shots'],
                 rng_seed=conf['seed'], compilation=conf['compilation'])
    base = conf['name'] or 'rb'
    out.csv(f'{base}.csv', 'length,survival_mean,survival_sem',
            [(int(m), float(s), float(e)) for m, s, e in zip(res.lengths, res.survival,
                                                             res.survival_sem)])
    report = {'A': res.A, 'p': res.p, 'B': res.B, 'epc': res.epc, 'epc_std': res.epc_std,
              'gateset': gs.hashes()}
    out.json(f'{base}.json', report)
    return report


def cmd_heatmap(conf, out):
    from .benchmark import DEFAULT_LENGTHS, noise_heatmap, program_executor, rb_sequences
    base = conf['name'] or f"heatmap_{conf['protocol']}"
    if conf['protocol'] == 'rb':
        gs = _gateset(conf)
        circuits = rb_sequences(conf['lengths'] or DEFAULT_LENGTHS, conf['seeds'], conf['seed'])
        hm = noise_heatmap(gs, conf['eps'], conf['delta_z'], 'rb', circuits=circuits,
                           compilation=conf['compilation'], jobs=conf['jobs'])
    else:
        target = _target(conf['target'])
        hm = noise_heatmap(None, conf['eps'], conf['delta_z'], 'qpt',
                           executor=program_executor(_program(conf['program'])),
                           target=target.unitary)
    out.csv(f'{base}.csv', 'delta_z_rad_s\\eps,' + ','.join(repr(e) for e in hm.eps),
            [(d, *(float(v) for v in row)) for d, row in zip(hm.delta_z, hm.values)])
    out.json(f'{base}.meta.json', hm.metadata)
    return {'shape': list(hm.values.shape)}


COMMANDS = {'synth': cmd_synth, 'certify': cmd_certify, 'scale': cmd_scale, 'scan': cmd_scan,
            'qpt': cmd_qpt, 'rb': cmd_rb, 'heatmap': cmd_heatmap}


def _fail(code, kind, exc, out_dir=None):
    record = {'status': 'error', 'exit_code': code, 'error': kind, 'message': str(exc),
              'payload': getattr(exc, 'payload', {})}
    text = json.dumps(record, sort_keys=True, default=_jsonable)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / 'error.json').write_text(text + '\n')
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    conf = None
    # where error.json goes if the configuration itself cannot be resolved
    fallback_dir = getattr(args, 'out_dir', None) or os.environ.get('SCQC_OUT', 'out')
    try:
        conf = resolve_config(args)
        out = _Writer(conf)
        summary = COMMANDS[args.command](conf, out)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, 'ConfigError', exc, (conf or {}).get('out_dir', fallback_dir))
    except (SCQCError, ValueError) as exc:
        payload = getattr(exc, 'payload', {})
        if isinstance(exc, SCQCError):
            # results are not serialisable; keep the certificates
            exc.payload = {k: v for k, v in payload.items() if k != 'result'}
        return _fail(EXIT_DOMAIN, type(exc).__name__, exc, (conf or {}).get('out_dir', fallback_dir))
    print(json.dumps({'status': 'ok', 'command': args.command, 'artifacts': out.written,
                      'config_hash': out.hash, 'seed': conf['seed'], 'summary': summary},
                     sort_keys=True, default=_jsonable))
    return 0


if __name__ == '__main__':
    sys.exit(main())
