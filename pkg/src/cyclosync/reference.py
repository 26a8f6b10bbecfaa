"""Slow, direct-summation reference implementations.

These exist to cross-check the FFT-based estimators along a fully
independent computation path: time-domain double sums with explicit phase
factors, no spectral shortcuts.  They are O(N^2) and meant for blocks of a
few hundred symbols.
"""

from __future__ import annotations

import numpy as np

__all__ = ["direct_caf_entry", "direct_caf_matrix", "direct_baudrate_tone"]


def direct_caf_entry(
    u: np.ndarray, v: np.ndarray, alpha: float, sample_rate: float
) -> np.ndarray:
    """Cyclic cross-correlation of u against v over all circular lags.

    R[m] = (1/N) sum_n u[(n+m) mod N] conj(v[n]) exp(-j 2 pi alpha (n + m/2) Ts),
    the symmetric-lag definition evaluated with midpoint phase on the
    integer-lag grid, with periodic extension of the block.
    """
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    n = u.size
    ts = 1.0 / sample_rate
    phase_n = np.exp(-2j * np.pi * alpha * np.arange(n) * ts)
    out = np.empty(n, dtype=complex)
    for m in range(n):
        out[m] = np.mean(np.roll(u, -m) * np.conj(v) * phase_n) * np.exp(
            -1j * np.pi * alpha * m * ts
        )
    return out


def direct_caf_matrix(
    x: np.ndarray, y: np.ndarray, alpha: float, sample_rate: float
) -> tuple[np.ndarray, np.ndarray]:
    """Matrix-valued direct cyclic correlation on a symmetric delay grid.

    Returns (delays, entries) ordered like cyclostats.caf_matrix with no
    frequency masking.
    """
    n = np.asarray(x).size
    entries_raw = np.empty((n, 2, 2), dtype=complex)
    entries_raw[:, 0, 0] = direct_caf_entry(x, x, alpha, sample_rate)
    entries_raw[:, 0, 1] = direct_caf_entry(x, y, alpha, sample_rate)
    entries_raw[:, 1, 0] = direct_caf_entry(y, x, alpha, sample_rate)
    entries_raw[:, 1, 1] = direct_caf_entry(y, y, alpha, sample_rate)
    order = np.fft.fftshift(np.arange(n))
    m_signed = np.where(order < n // 2, order, order - n)
    return m_signed / sample_rate, entries_raw[order]


def direct_baudrate_tone(
    x: np.ndarray, y: np.ndarray, alpha: float, sample_rate: float
) -> complex:
    """Complex baudrate line of |x|^2 + |y|^2 by plain summation."""
    t = np.arange(np.asarray(x).size) / sample_rate
    p = np.abs(np.asarray(x)) ** 2 + np.abs(np.asarray(y)) ** 2
    return complex(np.mean(p * np.exp(-2j * np.pi * alpha * t)))
