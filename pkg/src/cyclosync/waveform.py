"""Dual-polarization linearly modulated baseband waveforms.

The transmitted signal on each polarization is a pulse train
``x(t) = sum_n a_n g(t - tau_g - n T0)`` with independent symbol streams on
the two polarizations, a real even pulse ``g`` (root-raised-cosine by
default) and a controllable timing phase ``tau_g``.  Fractional timing
phases are applied by evaluating the closed-form pulse at shifted instants,
not by interpolating samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Constellation",
    "PulseShape",
    "DualPolWaveform",
    "generate_symbols",
    "draw_symbol_indices",
    "modulate",
    "matched_filter",
    "transient_guard",
]


# ---------------------------------------------------------------------------
# constellations
# ---------------------------------------------------------------------------

def _gray(n: int) -> int:
    return n ^ (n >> 1)


def _square_qam_points(m: int) -> np.ndarray:
    """Gray-mapped square QAM, index order = bit pattern (I bits then Q bits)."""
    side = int(round(np.sqrt(m)))
    if side * side != m:
        raise ValueError(f"square QAM size must be a perfect square, got {m}")
    levels = 2 * np.arange(side) - (side - 1)
    # invert the per-axis Gray map: bit pattern g selects level index with gray(idx)=g
    inv = np.zeros(side, dtype=int)
    for idx in range(side):
        inv[_gray(idx)] = idx
    pts = np.empty(m, dtype=complex)
    bits_per_axis = side.bit_length() - 1
    for code in range(m):
        gi = code >> bits_per_axis
        gq = code & (side - 1)
        pts[code] = levels[inv[gi]] + 1j * levels[inv[gq]]
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


@dataclass(frozen=True)
class Constellation:
    """Unit-average-power symbol alphabet.

    ``points[i]`` is the symbol transmitted for index ``i``; for the named
    square-QAM alphabets the index doubles as the Gray-coded bit pattern.
    """

    points: np.ndarray
    label: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        if pts.size < 2:
            raise ValueError("constellation needs at least 2 points")
        power = np.mean(np.abs(pts) ** 2)
        if abs(power - 1.0) > 1e-12:
            raise ValueError(f"constellation mean power must be 1, got {power}")
        object.__setattr__(self, "points", pts)

    @property
    def bits_per_symbol(self) -> int:
        n = self.points.size
        if n & (n - 1):
            raise ValueError("bit mapping defined only for power-of-two alphabets")
        return n.bit_length() - 1

    def index_bits(self, indices: np.ndarray) -> np.ndarray:
        """Bit rows (MSB first) for an index array."""
        k = self.bits_per_symbol
        idx = np.asarray(indices)
        return (idx[:, None] >> np.arange(k - 1, -1, -1)) & 1

    def nearest_index(self, symbols: np.ndarray) -> np.ndarray:
        d = np.abs(np.asarray(symbols)[:, None] - self.points[None, :])
        return np.argmin(d, axis=1)

    @classmethod
    def named(cls, label: str) -> "Constellation":
        key = label.upper().replace("-", "")
        if key in ("BPSK", "2PSK"):
            return cls(np.array([1.0 + 0j, -1.0 + 0j]), "BPSK")
        if key in ("QPSK", "4QAM"):
            return cls(_square_qam_points(4), "QPSK")
        if key == "16QAM":
            return cls(_square_qam_points(16), "16QAM")
        if key == "64QAM":
            return cls(_square_qam_points(64), "64QAM")
        raise ValueError(f"unknown constellation {label!r}")


# ---------------------------------------------------------------------------
# pulse shapes
# ---------------------------------------------------------------------------

def _rrc(u: np.ndarray, beta: float) -> np.ndarray:
    """Root-raised-cosine pulse in symbol units, unit continuous-time energy.

    Removable singularities at u=0 and |u|=1/(4 beta) are patched with their
    analytic limits.
    """
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    tiny = 1e-10
    at0 = np.abs(u) < tiny
    atedge = np.abs(np.abs(u) - 1.0 / (4 * beta)) < tiny
    regular = ~(at0 | atedge)
    ur = u[regular]
    num = np.sin(np.pi * ur * (1 - beta)) + 4 * beta * ur * np.cos(np.pi * ur * (1 + beta))
    den = np.pi * ur * (1 - (4 * beta * ur) ** 2)
    out[regular] = num / den
    out[at0] = 1 - beta + 4 * beta / np.pi
    out[atedge] = (beta / np.sqrt(2)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
        + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
    )
    return out


def _rc(u: np.ndarray, beta: float) -> np.ndarray:
    """Raised-cosine pulse in symbol units (unit peak), singularity patched."""
    u = np.asarray(u, dtype=float)
    out = np.sinc(u)
    tiny = 1e-10
    atedge = np.abs(np.abs(u) - 1.0 / (2 * beta)) < tiny
    regular = ~atedge
    ur = u[regular]
    out[regular] = out[regular] * np.cos(np.pi * beta * ur) / (1 - (2 * beta * ur) ** 2)
    out[atedge] = (np.pi / 4) * np.sinc(1.0 / (2 * beta))
    return out


@dataclass(frozen=True)
class PulseShape:
    """Real, even pulse-shaping filter description.

    rolloff must be strictly positive: with zero excess bandwidth the
    baudrate spectral correlation vanishes and none of the detectors here
    produce a usable tone.
    """

    rolloff: float = 0.1
    span: int = 32
    kind: str = "root-raised-cosine"

    def __post_init__(self):
        if not (0.0 < self.rolloff <= 1.0):
            raise ValueError("rolloff must be in (0, 1]")
        if self.span <= 0 or self.span % 2:
            raise ValueError("span must be a positive even number of symbols")
        if self.kind not in ("root-raised-cosine", "raised-cosine"):
            raise ValueError(f"unknown pulse kind {self.kind!r}")

    def taps(self, sps: int, shift: float = 0.0) -> np.ndarray:
        """Sampled pulse at ``sps`` samples/symbol, evaluated at a fractional
        symbol offset ``shift``.

        The scale is shift-independent and chosen so that the zero-shift tap
        energy approaches ``sps`` (unit-power waveforms for unit-power
        symbols).  Taps are exactly even-symmetric for shift = 0.
        """
        c = self.span * sps // 2
        u = (np.arange(self.span * sps + 1) - c) / sps - shift
        fn = _rrc if self.kind == "root-raised-cosine" else _rc
        return fn(u, self.rolloff)

    def energy(self, sps: int) -> float:
        """Discrete pulse energy per symbol period, sum(taps^2)/sps."""
        h = self.taps(sps)
        return float(h @ h) / sps


# ---------------------------------------------------------------------------
# waveform container
# ---------------------------------------------------------------------------

@dataclass
class DualPolWaveform:
    """Complex baseband sample streams for the two polarizations."""

    x: np.ndarray
    y: np.ndarray
    sample_rate: float
    baud_rate: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=complex)
        self.y = np.asarray(self.y, dtype=complex)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("x and y must be 1-d arrays of equal length")
        ratio = self.sample_rate / self.baud_rate
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 2:
            raise ValueError("sample_rate / baud_rate must be an integer >= 2")

    @property
    def sps(self) -> int:
        return int(round(self.sample_rate / self.baud_rate))

    @property
    def symbol_period(self) -> float:
        return 1.0 / self.baud_rate

    def __len__(self) -> int:
        return self.x.size

    def copy(self) -> "DualPolWaveform":
        return DualPolWaveform(self.x.copy(), self.y.copy(), self.sample_rate, self.baud_rate)


def transient_guard(w: DualPolWaveform, span: int) -> slice:
    """Interior slice excluding the filter transient (span symbols per edge)."""
    g = span * w.sps
    return slice(g, len(w) - g)


# ---------------------------------------------------------------------------
# symbol generation and modulation
# ---------------------------------------------------------------------------

def draw_symbol_indices(seed: int, count: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic index streams for the two polarizations.

    The streams come from independent child generators of one seed, so they
    are mutually uncorrelated and individually reproducible.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    ss_a, ss_b = np.random.SeedSequence(seed).spawn(2)
    ia = np.random.default_rng(ss_a).integers(0, size, count)
    ib = np.random.default_rng(ss_b).integers(0, size, count)
    return ia, ib


def generate_symbols(seed: int, count: int, constellation: Constellation):
    """Two independent symbol sequences drawn from a constellation."""
    if constellation.points.size == 0:
        raise ValueError("empty constellation")
    ia, ib = draw_symbol_indices(seed, count, constellation.points.size)
    return constellation.points[ia], constellation.points[ib]


def _shape_one(symbols: np.ndarray, taps: np.ndarray, sps: int, int_shift: int) -> np.ndarray:
    n = symbols.size
    up = np.zeros(n * sps, dtype=complex)
    up[::sps] = symbols
    full = np.convolve(up, taps)
    center = (taps.size - 1) // 2
    start = center - int_shift
    out = np.zeros(n * sps, dtype=complex)
    idx = np.arange(n * sps) + start
    ok = (idx >= 0) & (idx < full.size)
    out[ok] = full[idx[ok]]
    return out


def modulate(
    a: np.ndarray,
    b: np.ndarray,
    pulse: PulseShape,
    sps: int,
    tau_g: float = 0.0,
    baud_rate: float = 32e9,
) -> DualPolWaveform:
    """Shape two symbol streams into a dual-polarization waveform.

    Parameters
    ----------
    a, b : array_like
        Symbol sequences for the x and y polarizations (equal length).
    pulse : PulseShape
    sps : int
        Samples per symbol, at least 2.
    tau_g : float
        Timing phase in seconds.  The fractional part (of a sample) is
        realized by evaluating the pulse at shifted instants; whole samples
        are realized by an exact index shift.  |tau_g| must stay below
        span*T0.
    baud_rate : float
        Symbol rate in Hz; sample_rate = sps * baud_rate.

    With tau_g = 0, symbol ``n`` is centered on sample ``n * sps``.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("a and b must be 1-d arrays of equal length")
    if sps < 2:
        raise ValueError(
            "sps must be >= 2: baudrate cyclostationary statistics need at "
            "least two samples per symbol"
        )
    t0 = 1.0 / baud_rate
    if abs(tau_g) >= pulse.span * t0:
        raise ValueError("|tau_g| must be smaller than span * T0")
    sample_rate = sps * baud_rate
    shift_samples = tau_g * sample_rate
    int_shift = int(np.floor(shift_samples + 0.5))
    frac = shift_samples - int_shift  # in [-0.5, 0.5)
    taps = pulse.taps(sps, shift=frac / sps)
    x = _shape_one(a, taps, sps, int_shift)
    y = _shape_one(b, taps, sps, int_shift)
    return DualPolWaveform(x, y, sample_rate, baud_rate)


def matched_filter(w: DualPolWaveform, pulse: PulseShape) -> DualPolWaveform:
    """Zero-delay matched filter, gain-normalized so symbol samples keep
    their nominal amplitude (filter energy sps divided out)."""
    h = pulse.taps(w.sps) / w.sps
    c = (h.size - 1) // 2

    def filt(v):
        return np.convolve(v, h)[c: c + v.size]

    return DualPolWaveform(filt(w.x), filt(w.y), w.sample_rate, w.baud_rate)
