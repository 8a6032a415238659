"""Synthesize a doubly-robust sqrt(X), look at its curve, and scale it to hardware.

Run from the repository root:  python3 demos/synthesize_and_inspect.py
"""
import numpy as np

from scqc.dynamics import magnus_pi1, operator_to_vector
from scqc.pulsegen import geometric_blocks, initial_phase, save_envelope_csv, scale_pulse
from scqc.shaper import CostWeights, certify, synthesize
from scqc.spacecurve import frenet_trace

# a smaller search than the library build; enough for a certified SX
res = synthesize('SX', CostWeights(), order=12, seed=0, restarts=2, budget=4000)
cert = certify(res)
print(f'cost {res.final_cost:.3e} after {res.iterations} iterations')
for key, value in cert.as_dict().items():
    print(f'  {key:16s} {value}')

# the curve's closure and tangent area are the first-order error terms
trace = frenet_trace(res.curve, res.pulse.samples)
D, A = magnus_pi1(res.pulse)
Dg, Ag = geometric_blocks(trace, initial_phase(trace, res.pulse))
for label, dyn, geo in (('dephasing', D, Dg), ('amplitude', A, Ag)):
    print(f'{label} block: |dynamics| = {np.linalg.norm(operator_to_vector(dyn)):.1e}, '
          f'|dynamics - geometry| = {np.linalg.norm(operator_to_vector(dyn - geo)):.1e}')

# Tg * Omega_max is the only number that survives scaling
phys = scale_pulse(res.pulse, tg=80e-9)
print(f'Tg*Omega_max = {res.pulse.omega_max_dimless:.4f}; at 80 ns the peak drive is '
      f'{phys.omega_max / (2 * np.pi) / 1e6:.2f} MHz')
save_envelope_csv(phys, 'sx_envelope.csv')
print('wrote sx_envelope.csv')
