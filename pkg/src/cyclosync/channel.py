"""Fiber channel model: CD, first-order PMD, SOP rotation, ASE, phase noise, jitter.

All polarization operators are det-1 unitaries (PDL is neglected).  The
frequency-domain PMD operator is ``exp(-j pi f tau_dgd (p.sigma))`` about the
carrier, so the relation it induces between spectral components spaced by a
cyclic frequency ``alpha`` is exactly the matrix returned by
:func:`pmd_matrix` for that ``alpha``.

Sign conventions (numpy FFT, synthesis kernel ``exp(+j2*pi*f*t)``):
the CD operator is ``exp(-j K f^2)`` with ``K = pi lambda^2 DL / c``, which
places the cyclic-correlation peak of a positive-dispersion channel at the
positive delay ``lambda^2 DL alpha / c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .waveform import DualPolWaveform

__all__ = [
    "SPEED_OF_LIGHT",
    "OSNR_REF_BANDWIDTH",
    "StokesVector",
    "JonesUnitary",
    "JitterSpec",
    "DgdSweepSpec",
    "ChannelSpec",
    "pauli_combination",
    "pmd_matrix",
    "apply_channel",
    "compensate_cd",
    "add_ase",
    "add_phase_noise",
    "apply_jitter",
]

SPEED_OF_LIGHT = 299792458.0
# 0.1 nm at 1550 nm; community convention for quoting OSNR
OSNR_REF_BANDWIDTH = 12.5e9

_SIGMA1 = np.array([[1, 0], [0, -1]], dtype=complex)
_SIGMA2 = np.array([[0, 1], [1, 0]], dtype=complex)
_SIGMA3 = np.array([[0, -1j], [1j, 0]], dtype=complex)

PAULI = (_SIGMA1, _SIGMA2, _SIGMA3)


@dataclass(frozen=True)
class StokesVector:
    """Unit vector on the Poincare sphere."""

    p1: float
    p2: float
    p3: float

    def __post_init__(self):
        n = self.p1 ** 2 + self.p2 ** 2 + self.p3 ** 2
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"Stokes vector must be unit length, |p|^2 = {n}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3])

    @classmethod
    def normalized(cls, p1: float, p2: float, p3: float) -> "StokesVector":
        v = np.array([p1, p2, p3], dtype=float)
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(*(v / n))

    @classmethod
    def random(cls, rng: np.random.Generator) -> "StokesVector":
        v = rng.normal(size=3)
        return cls.normalized(*v)


def pauli_combination(p: StokesVector | np.ndarray) -> np.ndarray:
    """p1*sigma1 + p2*sigma2 + p3*sigma3 for a Stokes vector p."""
    arr = p.as_array() if isinstance(p, StokesVector) else np.asarray(p, dtype=float)
    return arr[0] * _SIGMA1 + arr[1] * _SIGMA2 + arr[2] * _SIGMA3


@dataclass(frozen=True)
class JonesUnitary:
    """Det-1 unitary [[a, -conj(b)], [b, conj(a)]] with |a|^2 + |b|^2 = 1."""

    a: complex
    b: complex

    def __post_init__(self):
        n = abs(self.a) ** 2 + abs(self.b) ** 2
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"|a|^2 + |b|^2 must be 1, got {n}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.a, -np.conj(self.b)], [self.b, np.conj(self.a)]], dtype=complex
        )

    def apply(self, x: np.ndarray, y: np.ndarray):
        m = self.matrix
        return m[0, 0] * x + m[0, 1] * y, m[1, 0] * x + m[1, 1] * y

    @classmethod
    def identity(cls) -> "JonesUnitary":
        return cls(1.0 + 0j, 0j)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "JonesUnitary":
        m = np.asarray(m, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError("expected a 2x2 matrix")
        if np.abs(m @ m.conj().T - np.eye(2)).max() > 1e-6 or abs(np.linalg.det(m) - 1) > 1e-6:
            raise ValueError("matrix is not a det-1 unitary")
        return cls(m[0, 0], m[1, 0])

    @classmethod
    def random(cls, rng: np.random.Generator) -> "JonesUnitary":
        z = rng.normal(size=4)
        n = np.linalg.norm(z)
        return cls((z[0] + 1j * z[1]) / n, (z[2] + 1j * z[3]) / n)

    @classmethod
    def rotation(cls, axis: StokesVector, angle: float) -> "JonesUnitary":
        """Rotation by ``angle`` (radians, Stokes space) about ``axis``:
        exp(-j angle/2 (axis.sigma))."""
        half = 0.5 * angle
        ps = pauli_combination(axis)
        m = np.cos(half) * np.eye(2) - 1j * np.sin(half) * ps
        return cls(m[0, 0], m[1, 0])


def pmd_matrix(dgd: float, psp: StokesVector, alpha: float) -> JonesUnitary:
    """First-order PMD matrix relating spectral components spaced by alpha.

    U = cos(pi alpha dgd) I - j sin(pi alpha dgd) (p.sigma); its eigenvalues
    are exp(-/+ j pi alpha dgd) with the slow axis along psp.
    """
    if not isinstance(psp, StokesVector):
        raise ValueError("psp must be a normalized StokesVector")
    if dgd < 0:
        raise ValueError("dgd must be >= 0")
    theta = np.pi * alpha * dgd
    c, s = np.cos(theta), np.sin(theta)
    p = psp.as_array()
    a = c - 1j * s * p[0]
    b = -1j * s * (p[1] + 1j * p[2])
    return JonesUnitary(a, b)


@dataclass(frozen=True)
class JitterSpec:
    """Sinusoidal sampling-instant deviation: amplitude in UI, frequency Hz."""

    amplitude: float = 0.0
    frequency: float = 0.0


@dataclass(frozen=True)
class DgdSweepSpec:
    """Sinusoidal DGD trajectory between dgd_min and dgd_max."""

    dgd_min: float
    dgd_max: float
    frequency: float


@dataclass
class ChannelSpec:
    """Full fiber/receiver impairment parameterization.

    cd_total is D*L in s/m, which is numerically identical to ns/nm.
    osnr_db = None means noiseless.  sop_rate > 0 rotates the SOP about a
    seed-chosen random Stokes axis, piecewise constant per block.
    """

    cd_total: float = 0.0
    wavelength: float = 1550e-9
    dgd: float = 0.0
    psp: StokesVector = field(default_factory=lambda: StokesVector(1.0, 0.0, 0.0))
    sop: JonesUnitary | None = None
    sop_rate: float = 0.0
    dgd_sweep: DgdSweepSpec | None = None
    block_len: int = 1024
    osnr_db: float | None = None
    linewidth: float = 0.0
    jitter: JitterSpec | None = None

    def __post_init__(self):
        if self.dgd < 0:
            raise ValueError("dgd must be >= 0")


def _cd_phase(f: np.ndarray, cd_total: float, wavelength: float) -> np.ndarray:
    k = np.pi * wavelength ** 2 * cd_total / SPEED_OF_LIGHT
    return np.exp(-1j * k * f ** 2)


def _pmd_response(f: np.ndarray, dgd: float, psp: StokesVector) -> np.ndarray:
    """Per-bin 2x2 operator exp(-j pi f dgd (p.sigma)), shape (n, 2, 2)."""
    theta = np.pi * f * dgd
    ps = pauli_combination(psp)
    eye = np.eye(2, dtype=complex)
    return np.cos(theta)[:, None, None] * eye - 1j * np.sin(theta)[:, None, None] * ps


def _apply_response(x: np.ndarray, y: np.ndarray, resp: np.ndarray):
    X = np.fft.fft(x)
    Y = np.fft.fft(y)
    Xo = resp[:, 0, 0] * X + resp[:, 0, 1] * Y
    Yo = resp[:, 1, 0] * X + resp[:, 1, 1] * Y
    return np.fft.ifft(Xo), np.fft.ifft(Yo)


def _time_varying_pmd(
    w: DualPolWaveform, spec: ChannelSpec, guard: int = 128
) -> tuple[np.ndarray, np.ndarray]:
    """Overlap-save PMD with per-block DGD from the sinusoidal sweep."""
    n = len(w)
    blk = spec.block_len
    sw = spec.dgd_sweep
    mid = 0.5 * (sw.dgd_min + sw.dgd_max)
    amp = 0.5 * (sw.dgd_max - sw.dgd_min)
    xo = np.zeros(n, dtype=complex)
    yo = np.zeros(n, dtype=complex)
    f = np.fft.fftfreq(blk + 2 * guard, 1.0 / w.sample_rate)
    for start in range(0, n, blk):
        stop = min(start + blk, n)
        t_mid = (start + stop) / 2 / w.sample_rate
        dgd_b = mid + amp * np.sin(2 * np.pi * sw.frequency * t_mid)
        lo = max(start - guard, 0)
        hi = min(stop + guard, n)
        xs = np.zeros(blk + 2 * guard, dtype=complex)
        ys = np.zeros(blk + 2 * guard, dtype=complex)
        off = lo - (start - guard)
        xs[off: off + hi - lo] = w.x[lo:hi]
        ys[off: off + hi - lo] = w.y[lo:hi]
        resp = _pmd_response(f, dgd_b, spec.psp)
        xb, yb = _apply_response(xs, ys, resp)
        xo[start:stop] = xb[guard: guard + stop - start]
        yo[start:stop] = yb[guard: guard + stop - start]
    return xo, yo


def apply_channel(w: DualPolWaveform, spec: ChannelSpec, seed: int = 0) -> DualPolWaveform:
    """Propagate a waveform through the configured channel.

    Deterministic for a given (waveform, spec, seed).  Operator order:
    SOP rotation, PMD, CD (all energy preserving), then ASE, laser phase
    noise and sampling jitter.
    """
    ss = np.random.SeedSequence(seed).spawn(4)
    x, y = w.x, w.y
    n = len(w)

    # SOP rotation, innermost operator
    if spec.sop_rate != 0.0:
        axis = StokesVector.random(np.random.default_rng(ss[0]))
        blk = spec.block_len
        x = x.copy()
        y = y.copy()
        for start in range(0, n, blk):
            stop = min(start + blk, n)
            t_mid = (start + stop) / 2 / w.sample_rate
            v = JonesUnitary.rotation(axis, spec.sop_rate * t_mid)
            x[start:stop], y[start:stop] = v.apply(x[start:stop], y[start:stop])
    elif spec.sop is not None:
        x, y = spec.sop.apply(x, y)

    # PMD
    if spec.dgd_sweep is not None:
        tmp = DualPolWaveform(x, y, w.sample_rate, w.baud_rate)
        x, y = _time_varying_pmd(tmp, spec)
    elif spec.dgd > 0.0:
        f = np.fft.fftfreq(n, 1.0 / w.sample_rate)
        x, y = _apply_response(x, y, _pmd_response(f, spec.dgd, spec.psp))

    # CD
    if spec.cd_total != 0.0:
        f = np.fft.fftfreq(n, 1.0 / w.sample_rate)
        h = _cd_phase(f, spec.cd_total, spec.wavelength)
        x = np.fft.ifft(np.fft.fft(x) * h)
        y = np.fft.ifft(np.fft.fft(y) * h)

    out = DualPolWaveform(x, y, w.sample_rate, w.baud_rate)
    if spec.osnr_db is not None:
        out = add_ase(out, spec.osnr_db, ss[1])
    if spec.linewidth > 0.0:
        out = add_phase_noise(out, spec.linewidth, ss[2])
    if spec.jitter is not None and spec.jitter.amplitude != 0.0:
        out = apply_jitter(out, spec.jitter.amplitude, spec.jitter.frequency, ss[3])
    return out


def compensate_cd(w: DualPolWaveform, cd_total: float, wavelength: float = 1550e-9) -> DualPolWaveform:
    """Inverse of the CD operator for an estimated D*L."""
    f = np.fft.fftfreq(len(w), 1.0 / w.sample_rate)
    h = np.conj(_cd_phase(f, cd_total, wavelength))
    x = np.fft.ifft(np.fft.fft(w.x) * h)
    y = np.fft.ifft(np.fft.fft(w.y) * h)
    return DualPolWaveform(x, y, w.sample_rate, w.baud_rate)


def add_ase(w: DualPolWaveform, osnr_db: float | None, seed) -> DualPolWaveform:
    """Circular complex white Gaussian noise at a given OSNR.

    OSNR is defined as total signal power over noise power in the 12.5 GHz
    reference bandwidth, both polarizations.  The complex noise variance per
    polarization over the full sampled band is therefore
    ``P_pol * (sample_rate / 12.5 GHz) * 10^(-OSNR/10)``, split equally
    between real and imaginary parts; P_pol is the measured mean signal
    power per polarization.
    """
    if osnr_db is None or np.isinf(osnr_db):
        return w.copy()
    rng = np.random.default_rng(seed)
    p_pol = 0.5 * (np.mean(np.abs(w.x) ** 2) + np.mean(np.abs(w.y) ** 2))
    var = p_pol * (w.sample_rate / OSNR_REF_BANDWIDTH) * 10 ** (-osnr_db / 10)
    sigma = np.sqrt(var / 2)
    n = len(w)
    nx = sigma * (rng.normal(size=n) + 1j * rng.normal(size=n))
    ny = sigma * (rng.normal(size=n) + 1j * rng.normal(size=n))
    return DualPolWaveform(w.x + nx, w.y + ny, w.sample_rate, w.baud_rate)


def add_phase_noise(w: DualPolWaveform, linewidth: float, seed) -> DualPolWaveform:
    """Common Wiener laser phase noise on both polarizations.

    Increment variance per sample is 2 pi linewidth T_s.
    """
    if linewidth < 0:
        raise ValueError("linewidth must be >= 0")
    if linewidth == 0:
        return w.copy()
    rng = np.random.default_rng(seed)
    step = np.sqrt(2 * np.pi * linewidth / w.sample_rate)
    theta = np.cumsum(step * rng.normal(size=len(w)))
    rot = np.exp(1j * theta)
    return DualPolWaveform(w.x * rot, w.y * rot, w.sample_rate, w.baud_rate)


def _cubic_resample(v: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Cubic Lagrange evaluation of v at fractional sample positions."""
    base = np.floor(positions).astype(int)
    s = positions - base
    n = v.size

    def grab(off):
        idx = np.clip(base + off, 0, n - 1)
        out = v[idx]
        out[(base + off < 0) | (base + off >= n)] = 0
        return out

    xm1, x0, x1, x2 = grab(-1), grab(0), grab(1), grab(2)
    c_m1 = -s * (s - 1) * (s - 2) / 6
    c_0 = (s * s - 1) * (s - 2) / 2
    c_1 = -s * (s + 1) * (s - 2) / 2
    c_2 = s * (s * s - 1) / 6
    return c_m1 * xm1 + c_0 * x0 + c_1 * x1 + c_2 * x2


def apply_jitter(
    w: DualPolWaveform, amplitude: float, frequency: float, seed, phase: float | None = None
) -> DualPolWaveform:
    """Sinusoidal sampling-clock jitter.

    The instantaneous offset is ``amplitude * T0 * sin(2 pi frequency t +
    phase)`` with a seed-determined phase unless one is given; a positive
    offset delays the waveform, i.e. acts as an added timing phase.  Offsets
    larger than one sample are handled by an integer/fractional split of the
    resampler, so amplitudes up to several UI are valid.
    """
    if amplitude == 0.0:
        return w.copy()
    if phase is None:
        phase = np.random.default_rng(seed).uniform(0, 2 * np.pi)
    t = np.arange(len(w)) / w.sample_rate
    offset_samples = amplitude * w.sps * np.sin(2 * np.pi * frequency * t + phase)
    positions = np.arange(len(w)) - offset_samples
    x = _cubic_resample(w.x, positions)
    y = _cubic_resample(w.y, positions)
    return DualPolWaveform(x, y, w.sample_rate, w.baud_rate)


def jitter_offset_ui(
    n: int,
    sample_rate: float,
    amplitude: float,
    frequency: float,
    seed,
    phase: float | None = None,
) -> np.ndarray:
    """The jitter trajectory (in UI) that apply_jitter injects for a seed."""
    if phase is None:
        phase = np.random.default_rng(seed).uniform(0, 2 * np.pi)
    t = np.arange(n) / sample_rate
    return amplitude * np.sin(2 * np.pi * frequency * t + phase)


def channel_jitter_trajectory(w_len: int, spec: ChannelSpec, sample_rate: float, seed: int) -> np.ndarray:
    """Jitter trajectory (UI) that apply_channel injects for (spec, seed)."""
    if spec.jitter is None or spec.jitter.amplitude == 0.0:
        return np.zeros(w_len)
    ss = np.random.SeedSequence(seed).spawn(4)
    return jitter_offset_ui(w_len, sample_rate, spec.jitter.amplitude, spec.jitter.frequency, ss[3])
