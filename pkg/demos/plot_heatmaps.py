"""Render heatmap CSVs (from rb_heatmaps.py or `scqc heatmap`) as PNG figures.

Needs matplotlib, which the package itself does not depend on.
Usage: python3 demos/plot_heatmaps.py hm_square.csv hm_doubly.csv ...
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LogNorm  # noqa: E402


def read_heatmap(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith('#')]
    eps = np.array([float(v) for v in lines[0].split(',')[1:]])
    rows = np.array([[float(v) for v in ln.split(',')] for ln in lines[1:]])
    return eps, rows[:, 0], rows[:, 1:]


for path in sys.argv[1:]:
    eps, dz, values = read_heatmap(path)
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    floor = max(values[values > 0].min(), 1e-9) if np.any(values > 0) else 1e-9
    im = ax.imshow(np.clip(values, floor, None), origin='lower', cmap='viridis',
                   norm=LogNorm(vmin=floor, vmax=max(values.max(), floor * 10)))
    ax.set_xticks(range(len(eps)), [f'{100 * e:g}' for e in eps])
    ax.set_yticks(range(len(dz)), [f'{d / (2 * np.pi * 1e3):.0f}' for d in dz])
    ax.set_xlabel('amplitude error (%)')
    ax.set_ylabel('detuning error (kHz)')
    fig.colorbar(im, ax=ax, label='EPC')
    ax.set_title(Path(path).stem)
    fig.tight_layout()
    out = Path(path).with_suffix('.png')
    fig.savefig(out, dpi=150)
    print(f'wrote {out}')
