"""Second-order cyclostationary statistics of dual-polarization signals.

The central objects are the per-block cyclic periodogram

    P'(f) = E1(f) E2(f)^H,   E1 = [X(f+a/2); Y(f+a/2)],  E2 = [X(f-a/2); Y(f-a/2)],

its frequency/block average (the cyclic correlation matrix estimate) and the
matrix-valued cyclic correlation over a delay grid (inverse transform of the
spectral correlation).

Conventions: blocks must start on symbol boundaries so that the common phase
of the average encodes the timing phase.  The half-shift ``a/2`` must land on
the FFT bin grid (enforced); bin pairing is circular.  At 2 samples/symbol
the circular pairing additionally picks up a conjugate image band around
+/- sample_rate/2; the delay-domain transform masks it out by default
(``band_limit = alpha/2``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .waveform import DualPolWaveform

__all__ = [
    "CyclicMatrixEstimate",
    "CafMatrix",
    "BlockPeriodograms",
    "cyclic_periodogram",
    "periodogram_blocks",
    "average_cyclic_matrix",
    "caf_matrix",
]


@dataclass
class CyclicMatrixEstimate:
    """Frequency-averaged 2x2 cyclic correlation matrix at one delay."""

    m: np.ndarray
    alpha: float
    tau: float
    n_blocks: int

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=complex)
        if self.m.shape != (2, 2):
            raise ValueError("m must be 2x2")
        if not np.all(np.isfinite(self.m)):
            raise ValueError("matrix entries must be finite")
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")


@dataclass
class CafMatrix:
    """2x2 cyclic (auto/cross) correlation over a symmetric delay grid.

    entries[i] is the 2x2 matrix at delays[i]; entry (0,0) is R_xx, (0,1)
    R_xy, (1,0) R_yx, (1,1) R_yy.
    """

    delays: np.ndarray
    entries: np.ndarray
    alpha: float

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=float)
        self.entries = np.asarray(self.entries, dtype=complex)
        if self.entries.shape != (self.delays.size, 2, 2):
            raise ValueError("entries must have shape (n_delays, 2, 2)")

    @property
    def grid_step(self) -> float:
        return float(self.delays[1] - self.delays[0])


@dataclass
class BlockPeriodograms:
    """Stack of per-block cyclic periodograms plus grid metadata."""

    values: np.ndarray  # (n_blocks, nfft, 2, 2)
    alpha: float
    sample_rate: float

    @property
    def nfft(self) -> int:
        return self.values.shape[1]

    @property
    def n_blocks(self) -> int:
        return self.values.shape[0]

    @property
    def freqs(self) -> np.ndarray:
        return np.fft.fftfreq(self.nfft, 1.0 / self.sample_rate)


def _half_shift_bins(alpha: float, n: int, sample_rate: float) -> int:
    s_float = alpha * n / (2.0 * sample_rate)
    s = int(round(s_float))
    if abs(s_float - s) > 1e-6 or s == 0:
        raise ValueError(
            f"alpha/2 = {alpha/2:g} Hz is not on the FFT bin grid "
            f"(n={n}, df={sample_rate/n:g} Hz); choose nfft so that "
            "alpha*nfft/(2*sample_rate) is an integer"
        )
    return s


def cyclic_periodogram(
    block_x: np.ndarray,
    block_y: np.ndarray,
    alpha: float,
    sample_rate: float,
    window: np.ndarray | None = None,
) -> np.ndarray:
    """Single-block cyclic periodogram matrix, shape (nfft, 2, 2).

    Row q is the outer product of the Jones vectors at bin q+s and q-s
    (circular), s = alpha/2 in bins, scaled by 1/sum(window^2) so that the
    rectangular-window case matches a 1/N time average.
    """
    x = np.asarray(block_x, dtype=complex)
    y = np.asarray(block_y, dtype=complex)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("blocks must be 1-d arrays of equal length")
    n = x.size
    s = _half_shift_bins(alpha, n, sample_rate)
    if window is not None:
        window = np.asarray(window, dtype=float)
        if window.shape != x.shape:
            raise ValueError("window length must match block length")
        scale = float(window @ window)
        x = x * window
        y = y * window
    else:
        scale = float(n)
    X = np.fft.fft(x)
    Y = np.fft.fft(y)
    Xp, Xm = np.roll(X, -s), np.roll(X, s)
    Yp, Ym = np.roll(Y, -s), np.roll(Y, s)
    out = np.empty((n, 2, 2), dtype=complex)
    out[:, 0, 0] = Xp * np.conj(Xm)
    out[:, 0, 1] = Xp * np.conj(Ym)
    out[:, 1, 0] = Yp * np.conj(Xm)
    out[:, 1, 1] = Yp * np.conj(Ym)
    out /= scale
    return out


def periodogram_blocks(
    w: DualPolWaveform,
    nfft: int = 1024,
    alpha: float | None = None,
    skip_symbols: int = 0,
    max_blocks: int | None = None,
    window: np.ndarray | None = None,
    overlap: bool = False,
) -> BlockPeriodograms:
    """Slice a waveform into symbol-aligned blocks and accumulate periodograms.

    skip_symbols discards the leading filter transient.  ``overlap`` switches
    from disjoint blocks to Welch-style half-overlapped ones (more averages
    from the same record).  A trailing partial block is dropped.
    """
    if nfft % w.sps:
        raise ValueError("nfft must be a multiple of sps to stay symbol aligned")
    if alpha is None:
        alpha = w.baud_rate
    start = skip_symbols * w.sps
    stride = nfft // 2 if overlap else nfft
    n_blocks = (len(w) - start - nfft) // stride + 1
    if max_blocks is not None:
        n_blocks = min(n_blocks, max_blocks)
    if n_blocks < 1:
        raise ValueError("waveform too short for one block")
    vals = np.empty((n_blocks, nfft, 2, 2), dtype=complex)
    for i in range(n_blocks):
        lo = start + i * stride
        vals[i] = cyclic_periodogram(
            w.x[lo: lo + nfft], w.y[lo: lo + nfft], alpha, w.sample_rate, window
        )
    return BlockPeriodograms(vals, alpha, w.sample_rate)


def average_cyclic_matrix(
    pg: BlockPeriodograms,
    band: float,
    cd_phase_tau: float = 0.0,
    normalize: bool = True,
) -> CyclicMatrixEstimate:
    """Frequency/block average of the cyclic periodogram around f = 0.

    Parameters
    ----------
    pg : BlockPeriodograms
    band : float
        Half-width of the integration band as a fraction of alpha.  The
        useful region is where both shifted pulse spectra overlap, i.e.
        rolloff/2 for raised-cosine family pulses.
    cd_phase_tau : float
        Linear de-rotation delay in seconds: each bin is rotated by
        exp(+j 2 pi f cd_phase_tau) before averaging, which undoes the
        linear spectral phase of a dispersive channel when set to the
        cyclic-correlation peak delay.
    normalize : bool
        Divide by the band/block average of ||P'||_F / 2, so an ideal
        channel returns a matrix with unit-magnitude entries structure
        (identity for no impairments, up to the common timing phase).
    """
    if band <= 0:
        raise ValueError("empty integration band")
    f = pg.freqs
    mask = np.abs(f) <= band * pg.alpha
    if not np.any(mask):
        raise ValueError("empty integration band")
    rot = np.exp(2j * np.pi * f[mask] * cd_phase_tau)
    sel = pg.values[:, mask, :, :]
    m = (sel * rot[None, :, None, None]).mean(axis=(0, 1))
    if normalize:
        a_hat = 0.5 * np.linalg.norm(sel, axis=(2, 3)).mean()
        if a_hat > 0:
            m = m / a_hat
    return CyclicMatrixEstimate(m, pg.alpha, cd_phase_tau, pg.n_blocks)


def caf_matrix(
    pg: BlockPeriodograms,
    band_limit: float | str = "auto",
) -> CafMatrix:
    """Matrix-valued cyclic correlation over the delay grid.

    Inverse transform over frequency of the block-averaged spectral
    correlation.  ``band_limit`` masks the spectrum to |f| <= band_limit
    before transforming; the default keeps |f| < alpha/2, which removes the
    conjugate image band present at critical (2 samples/symbol) sampling.
    Pass ``None`` to keep every bin (exact inverse of the raw periodogram,
    used for oracle comparisons).
    """
    s_avg = pg.values.mean(axis=0)
    n = pg.nfft
    if band_limit is not None:
        lim = 0.5 * pg.alpha if band_limit == "auto" else float(band_limit)
        s_avg = s_avg.copy()
        s_avg[np.abs(pg.freqs) > lim] = 0
    r = np.fft.ifft(s_avg, axis=0)
    order = np.fft.fftshift(np.arange(n))
    m_signed = np.where(order < n // 2, order, order - n)
    delays = m_signed / pg.sample_rate
    return CafMatrix(delays, r[order], pg.alpha)
