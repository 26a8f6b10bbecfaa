"""Cyclostationarity-based timing recovery for simulated optical coherent receivers.

Core building blocks:

- :mod:`cyclosync.waveform`   dual-polarization linear modulation (RRC/RC pulses)
- :mod:`cyclosync.channel`    CD, first-order PMD, SOP rotation, ASE, phase noise, ADC jitter
- :mod:`cyclosync.cyclostats` cyclic periodograms, frequency-averaged cyclic matrices, CAF matrices
- :mod:`cyclosync.estimators` CD delay, PMD matrix, DGD and PSP estimation
- :mod:`cyclosync.ted`        timing error detectors (square, trace, trace-U, det, adaptive, 4th order)
- :mod:`cyclosync.sync`       closed-loop timing recovery and a minimal LMS/PLL receiver
- :mod:`cyclosync.scenarios`  scenario specs and sweep runners behind the service/CLI
"""

__version__ = "0.1.0"

from .waveform import Constellation, DualPolWaveform, PulseShape, generate_symbols, modulate
from .channel import ChannelSpec, JonesUnitary, StokesVector, apply_channel, pmd_matrix

__all__ = [
    "Constellation",
    "DualPolWaveform",
    "PulseShape",
    "generate_symbols",
    "modulate",
    "ChannelSpec",
    "JonesUnitary",
    "StokesVector",
    "apply_channel",
    "pmd_matrix",
    "__version__",
]
