"""Simulated RB error per Clifford over the 6x6 (amplitude, detuning) grid.

Writes one CSV per gateset; render them with demos/plot_heatmaps.py.
"""
from scqc import library
from scqc.benchmark import noise_heatmap, rb_sequences, save_heatmap, square_gateset

circuits = rb_sequences()
gatesets = {'square': square_gateset(), 'doubly': library.robust_gateset(),
            'singly': library.singly_gateset()}

for name, gs in gatesets.items():
    hm = noise_heatmap(gs, circuits=circuits)
    save_heatmap(hm, f'hm_{name}.csv', f'hm_{name}.meta.json')
    print(f'\n{name}: EPC, rows delta_z (kHz), columns eps (%)')
    print('        ' + ''.join(f'{100 * e:9.1f}' for e in hm.eps))
    for dz, row in zip(hm.delta_z, hm.values):
        print(f'{dz / 6.283185307179586e3:7.0f} ' + ''.join(f'{v:9.1e}' for v in row))
