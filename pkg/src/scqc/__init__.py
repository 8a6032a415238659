"""Robust single-qubit gates from space curves, with simulated benchmarks.

Modules
-------
spacecurve  Bézier curves, arc length, Frenet and Bishop frames, robustness functionals
pulsegen    curve -> drive fields, physical scaling, resampling, pulse files
dynamics    piecewise-constant propagation under quasi-static noise, Magnus blocks
shaper      gate synthesis with a Bézier ansatz and certificates
benchmark   process tomography, randomized benchmarking, noise heatmaps
cli         command-line front end (``scqc``)
"""
from .dynamics import NoisePoint
from .errors import SCQCError
from .pulsegen import PulseWaveform, QubitSpec
from .spacecurve import GeometryTrace, SpaceCurve

__version__ = '0.1.0'

__all__ = ['NoisePoint', 'PulseWaveform', 'QubitSpec', 'GeometryTrace', 'SpaceCurve',
           'SCQCError', '__version__']
