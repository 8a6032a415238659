"""Infidelity versus amplitude and detuning error: robust pulses against square ones.

A first-order robust pulse has infidelity growing as the fourth power of the
error; a plain square pulse grows quadratically.
"""
import numpy as np

from scqc import library
from scqc.dynamics import infidelity_scan
from scqc.shaper import GATES, square_pulse

decade = np.logspace(-3, -2, 5)
pulses = {name: (library.pulse(name), GATES[target])
          for name, (target, _) in library.ENTRIES.items()}
pulses['square_x'] = (square_pulse(np.pi), GATES['X'])

print(f'{"pulse":12s} {"Tg*Om_max":>9s} {"slope eps":>10s} {"slope dz":>9s}  infidelity at 1%')
for name, (pulse, target) in pulses.items():
    eps = infidelity_scan(pulse, target, 'eps', decade)
    dz = infidelity_scan(pulse, target, 'delta_z', decade * pulse.omega_max_dimless)
    s_eps = np.polyfit(np.log(decade), np.log(eps), 1)[0]
    s_dz = np.polyfit(np.log(decade), np.log(dz), 1)[0]
    print(f'{name:12s} {pulse.omega_max_dimless:9.3f} {s_eps:10.2f} {s_dz:9.2f}  '
          f'eps {eps[-1]:.1e}, dz {dz[-1]:.1e}')
# singly-robust pulses keep the detuning slope but lose the amplitude one
