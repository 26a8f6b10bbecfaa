"""Timing error detectors.

Second-order family (square-law clock tone and the cyclic-matrix based
trace / trace-U / det / adaptive detectors) plus four classic fourth-order
algorithms for comparison.  The matrix detectors consume a
CyclicMatrixEstimate so CD de-rotation composes uniformly with every one of
them.

Conventions: a positive timing phase tau_g (waveform late) yields a
positive error from the one-UI-periodic detectors near the central lock
point, i.e. e(tau) ~ A sin(2 pi tau / T0) with A > 0 for the square and
trace detectors on a clean channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import JonesUnitary
from .cyclostats import CyclicMatrixEstimate

__all__ = [
    "TedReading",
    "AdaptiveTedState",
    "ted_square",
    "ted_trace",
    "ted_trace_u",
    "ted_det",
    "clock_tone_spectrum",
    "ted_adaptive",
    "ted_fourth_order",
    "FOURTH_ORDER_VARIANTS",
]


@dataclass(frozen=True)
class TedReading:
    e_t: float
    aux_real: float
    detector: str

    def __post_init__(self):
        if not (np.isfinite(self.e_t) and np.isfinite(self.aux_real)):
            raise ValueError("TED outputs must be finite")


def _wrap_phase(phi: float) -> float:
    return float((phi + np.pi) % (2 * np.pi) - np.pi)


@dataclass(frozen=True)
class AdaptiveTedState:
    """Phases of the adaptive linear combination, wrapped to (-pi, pi]."""

    phi_xy: float = 0.0
    phi_yx: float = 0.0
    phi_yy: float = 0.0
    mu: float = 0.05

    def __post_init__(self):
        if not (0.0 < self.mu < 1.0):
            raise ValueError("mu must be in (0, 1)")
        for name in ("phi_xy", "phi_yx", "phi_yy"):
            object.__setattr__(self, name, _wrap_phase(getattr(self, name)))


def ted_square(
    x: np.ndarray, y: np.ndarray, alpha: float, sample_rate: float
) -> TedReading:
    """Square-law detector: spectral line of |x|^2 + |y|^2 at the baudrate.

    e = -Im{ mean (|x|^2+|y|^2) exp(-j 2 pi alpha t) }.  Input should be
    matched filtered for best tone SNR.  Note that at exactly 2
    samples/symbol the baudrate line of the power signal sits on its
    Nyquist frequency and the imaginary part is unobservable; use >= 3 (in
    practice 4) samples per symbol.  Time is referenced to the first sample,
    so blocks must start on symbol boundaries.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    t = np.arange(x.size) / sample_rate
    z = np.mean((np.abs(x) ** 2 + np.abs(y) ** 2) * np.exp(-2j * np.pi * alpha * t))
    return TedReading(float(-z.imag), float(z.real), "square")


def ted_trace(c: CyclicMatrixEstimate) -> TedReading:
    """e = -Im trace(M); polarization-rotation free, but the amplitude
    scales with cos(pi alpha DGD) and vanishes at half-symbol DGD."""
    tr = np.trace(c.m)
    return TedReading(float(-tr.imag), float(tr.real), "trace")


def ted_trace_u(c: CyclicMatrixEstimate, u_hat: JonesUnitary) -> TedReading:
    """e = -Im trace(M U^H): PMD removed given a matrix estimate U.

    Sign-safe only while the true DGD stays below half a symbol (the
    reconstruction of U is sign-ambiguous beyond that).
    """
    tr = np.trace(c.m @ u_hat.matrix.conj().T)
    return TedReading(float(-tr.imag), float(tr.real), "trace_u")


def ted_det(c: CyclicMatrixEstimate) -> TedReading:
    """e = -Im det(M): transparent to polarization rotation and first-order
    PMD for any DGD.  The S-curve period is half a UI, so a loop built on it
    has two lock points per symbol."""
    d = np.linalg.det(c.m)
    return TedReading(float(-d.imag), float(d.real), "det")


def clock_tone_spectrum(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """PMD-independent clock tone spectrum F = Fxx*Fyy - Fxy*Fyx.

    F_ab is the FFT of a*conj(b) (element-wise time products); the dominant
    tone appears at +/- baudrate and its phase at the baudrate bin is twice
    the (negated) timing phase angle, matching the det detector.  Input
    should be CD compensated.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    fxx = np.fft.fft(x * np.conj(x))
    fyy = np.fft.fft(y * np.conj(y))
    fxy = np.fft.fft(x * np.conj(y))
    fyx = np.fft.fft(y * np.conj(x))
    return fxx * fyy - fxy * fyx


def ted_adaptive(
    state: AdaptiveTedState, c: CyclicMatrixEstimate
) -> tuple[TedReading, AdaptiveTedState]:
    """Adaptive linear combination of the four matrix entries.

    q = M_xx + e^{j phi_xy} M_xy + e^{j phi_yx} M_yx + e^{j phi_yy} M_yy,
    e = -Im q.  Each phase is nudged so its rotated term becomes real:
    phi <- phi - mu Im(e^{j phi} M_l).  At convergence the loop locks to the
    phase of M_xx, i.e. the timing phase plus the angle of the first PMD
    matrix element, not the true timing phase.
    """
    m = c.m
    q = (
        m[0, 0]
        + np.exp(1j * state.phi_xy) * m[0, 1]
        + np.exp(1j * state.phi_yx) * m[1, 0]
        + np.exp(1j * state.phi_yy) * m[1, 1]
    )
    new = AdaptiveTedState(
        phi_xy=state.phi_xy - state.mu * np.imag(np.exp(1j * state.phi_xy) * m[0, 1]),
        phi_yx=state.phi_yx - state.mu * np.imag(np.exp(1j * state.phi_yx) * m[1, 0]),
        phi_yy=state.phi_yy - state.mu * np.imag(np.exp(1j * state.phi_yy) * m[1, 1]),
        mu=state.mu,
    )
    return TedReading(float(-q.imag), float(q.real), "adaptive"), new


FOURTH_ORDER_VARIANTS = ("power", "correlation", "moeneclaey", "re-combination")


def ted_fourth_order(
    samples_x: np.ndarray,
    samples_y: np.ndarray,
    variant: int | str = 1,
    dual_pol: bool = False,
) -> TedReading:
    """Classic fourth-order detectors evaluated on a 2 samples/symbol block.

    Variants (even indices are assumed to be the symbol-centered samples;
    variant 3 indexes consecutive symbol-rate samples, so the even-index
    stream is decimated out internally):

    1 "power":          sum P_2k (P_{2k+1} - P_{2k-1}), P = |x|^2 + |y|^2
    2 "correlation":    sum x_2k x*_{2k+1}(x_{2k+1} x*_{2k+2} - x_{2k-1} x*_2k) + (same for y)
    3 "moeneclaey":     sum x_k x*_{k+1}(|x_k|^2 - |x_{k+1}|^2) over symbol-rate samples, single polarization
    4 "re-combination": mean Re[(x*_{2k-1}+x*_2k)(x_2k+x_{2k+1}) ((x_{2k-2}+x_{2k-1})(x*_{2k-1}+x*_2k) - (x_2k+x_{2k+1})(x*_{2k+1}+x*_{2k+2}))]

    Variants 3 and 4 are single-polarization formulas and run on x alone
    unless dual_pol=True adds the same expression evaluated on y.  Outputs
    are normalized by the number of accumulated terms; for the complex
    variants e_t is the real part and aux_real the imaginary part.

    Measured characteristics on a clean matched-filtered channel: variants
    1, 3 and 4 cross zero at the symbol center; variant 2 evaluates to an
    even (cosine-like) curve whose zeros sit a quarter symbol off center.
    """
    x = np.asarray(samples_x, dtype=complex)
    y = np.asarray(samples_y, dtype=complex)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("sample blocks must be 1-d arrays of equal length")
    names = {1: "power", 2: "correlation", 3: "moeneclaey", 4: "re-combination"}
    if isinstance(variant, str):
        try:
            variant = FOURTH_ORDER_VARIANTS.index(variant) + 1
        except ValueError:
            raise ValueError(f"unknown fourth-order variant {variant!r}") from None
    if variant not in names:
        raise ValueError(f"variant must be 1..4, got {variant}")

    if variant == 1:
        p = np.abs(x) ** 2 + np.abs(y) ** 2
        ke = np.arange(2, p.size - 1, 2)
        acc = np.sum(p[ke] * (p[ke + 1] - p[ke - 1]))
        n = ke.size
        return TedReading(float(acc.real / n), 0.0, "fourth-power")

    if variant == 2:
        def one(v):
            ke = np.arange(2, v.size - 2, 2)
            return np.sum(
                v[ke] * np.conj(v[ke + 1]) * (v[ke + 1] * np.conj(v[ke + 2]) - v[ke - 1] * np.conj(v[ke]))
            ), ke.size
        ax, n = one(x)
        ay, _ = one(y)
        acc = (ax + ay) / (2 * n)
        return TedReading(float(acc.real), float(acc.imag), "fourth-correlation")

    if variant == 3:
        def one(v):
            v = v[::2]  # symbol-rate stream; summing both sample parities
            # at 2 sps cancels the odd part of the statistic entirely
            k = np.arange(v.size - 1)
            return np.sum(
                v[k] * np.conj(v[k + 1]) * (np.abs(v[k]) ** 2 - np.abs(v[k + 1]) ** 2)
            ), k.size
        acc, n = one(x)
        if dual_pol:
            ay, _ = one(y)
            acc = acc + ay
            n *= 2
        acc = acc / n
        return TedReading(float(acc.real), float(acc.imag), "fourth-moeneclaey")

    def one(v):
        ke = np.arange(2, v.size - 2, 2)
        early = np.conj(v[ke - 1]) + np.conj(v[ke])
        mid = v[ke] + v[ke + 1]
        left = (v[ke - 2] + v[ke - 1]) * (np.conj(v[ke - 1]) + np.conj(v[ke]))
        right = (v[ke] + v[ke + 1]) * (np.conj(v[ke + 1]) + np.conj(v[ke + 2]))
        return np.sum(np.real(early * mid * (left - right))), ke.size

    acc, n = one(x)
    if dual_pol:
        ay, _ = one(y)
        acc = acc + ay
        n *= 2
    return TedReading(float(acc / n), 0.0, "fourth-re-combination")
