import numpy as np
import pytest

from cyclosync.waveform import Constellation, PulseShape, draw_symbol_indices, modulate

BAUD = 32e9
T0 = 1.0 / BAUD
ALPHA = BAUD


def make_waveform(seed, nsym, tau_ui=0.0, sps=2, rolloff=0.1, span=32, modulation="16QAM"):
    const = Constellation.named(modulation)
    ia, ib = draw_symbol_indices(seed, nsym, const.points.size)
    pulse = PulseShape(rolloff=rolloff, span=span)
    w = modulate(const.points[ia], const.points[ib], pulse, sps, tau_g=tau_ui * T0, baud_rate=BAUD)
    return w, const.points[ia], const.points[ib], pulse


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
