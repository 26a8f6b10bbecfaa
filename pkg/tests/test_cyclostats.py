import numpy as np
import pytest

from conftest import ALPHA, BAUD, T0, make_waveform
from cyclosync.channel import ChannelSpec, JonesUnitary, StokesVector, apply_channel, pmd_matrix
from cyclosync.cyclostats import (
    BlockPeriodograms,
    CyclicMatrixEstimate,
    average_cyclic_matrix,
    caf_matrix,
    cyclic_periodogram,
    periodogram_blocks,
)
from cyclosync.reference import direct_caf_matrix
from cyclosync.waveform import matched_filter


class TestCyclicPeriodogram:
    def test_zero_block(self):
        p = cyclic_periodogram(np.zeros(512, complex), np.zeros(512, complex), ALPHA, 64e9)
        assert p.shape == (512, 2, 2)
        assert np.all(p == 0)

    def test_off_grid_alpha_rejected(self):
        # alpha/2 = 127.5 bins at this length: silent leakage, so reject
        with pytest.raises(ValueError, match="bin grid"):
            cyclic_periodogram(np.zeros(510, complex), np.zeros(510, complex), ALPHA, 64e9)

    def test_two_tone_closed_form(self):
        # x carries tones at f1 and f2 = f1 - alpha; the (0,0) entry of the
        # periodogram is nonzero exactly at their midpoint frequency
        n, fs = 1024, 64e9
        k1 = 400  # bin of f1
        k2 = k1 - int(ALPHA * n / fs)  # bin of f2 = f1 - alpha
        t = np.arange(n) / fs
        x = np.exp(2j * np.pi * (k1 * fs / n) * t) + np.exp(2j * np.pi * (k2 * fs / n) * t)
        y = np.zeros(n, complex)
        p = cyclic_periodogram(x, y, ALPHA, fs)
        mags = np.abs(p[:, 0, 0])
        mid = (k1 + k2) // 2
        image = (mid + n // 2) % n  # circular-pairing image of the midpoint
        assert mags[mid] == pytest.approx(n, rel=1e-9)
        others = np.delete(mags, [mid, image])
        assert others.max() < 1e-6 * mags[mid]
        assert np.all(np.abs(p[:, 1, 1]) < 1e-9)

    def test_window_scaling(self):
        x = np.exp(2j * np.pi * 0.1 * np.arange(1024))
        win = np.hanning(1024)
        p = cyclic_periodogram(x, x, ALPHA, 64e9, window=win)
        assert np.all(np.isfinite(p))


class TestAverageCyclicMatrix:
    def test_no_channel_near_identity(self):
        # off-diagonals sit at the 1/sqrt(bins * blocks) statistical floor
        # (~0.07 for 4 blocks of 512 symbols, ~0.035 for 16), so a clean
        # identity needs a few thousand symbols of averaging
        w, *_ = make_waveform(21, 8192 + 64)
        wf = matched_filter(w, _pulse())
        pg = periodogram_blocks(wf, nfft=1024, skip_symbols=32)
        c = average_cyclic_matrix(pg, band=0.05)
        assert abs(c.m[0, 0]) > 0.7
        assert abs(np.angle(c.m[0, 0])) < 0.05
        assert abs(c.m[0, 1]) < 0.1 and abs(c.m[1, 0]) < 0.1

    def test_single_block_statistical_floor(self):
        w, *_ = make_waveform(22, 512 + 64)
        wf = matched_filter(w, _pulse())
        pg = periodogram_blocks(wf, nfft=1024, skip_symbols=32)
        c = average_cyclic_matrix(pg, band=0.05)
        assert abs(c.m[0, 1]) < 0.3 and abs(c.m[1, 0]) < 0.3

    def test_timing_phase_in_common_angle(self):
        w, *_ = make_waveform(23, 16384 + 64, tau_ui=0.125)
        wf = matched_filter(w, _pulse())
        pg = periodogram_blocks(wf, nfft=1024, skip_symbols=32)
        c = average_cyclic_matrix(pg, band=0.05)
        # common phase is -2 pi alpha tau_g = -pi/4
        assert abs(np.angle(c.m[0, 0]) + np.pi / 4) < 0.05
        assert abs(np.angle(c.m[1, 1]) + np.pi / 4) < 0.05

    def test_worst_case_half_symbol_dgd(self, rng):
        # U = -j sigma2 for half-symbol DGD with p = (0,1,0): diagonals of the
        # averaged matrix collapse, off-diagonals carry unit weight
        w, *_ = make_waveform(24, 16384 + 64)
        spec = ChannelSpec(dgd=15.625e-12, psp=StokesVector(0, 1, 0))
        wo = apply_channel(w, spec, seed=2)
        wf = matched_filter(wo, _pulse())
        pg = periodogram_blocks(wf, nfft=1024, skip_symbols=32)
        c = average_cyclic_matrix(pg, band=0.05)
        expect = -1j * np.array([[0, 1], [1, 0]], dtype=complex)
        assert abs(c.m[0, 0]) < 0.08 and abs(c.m[1, 1]) < 0.08
        for i, j in ((0, 1), (1, 0)):
            assert abs(c.m[i, j] - expect[i, j]) < 0.15

    def test_cd_suppression_and_restoration(self):
        w, *_ = make_waveform(25, 8192 + 64)
        wo = apply_channel(w, ChannelSpec(cd_total=8.5), seed=3)
        wf = matched_filter(wo, _pulse())
        pg = periodogram_blocks(wf, nfft=1024, skip_symbols=32)
        collapsed = average_cyclic_matrix(pg, band=0.05, cd_phase_tau=0.0)
        tau_cd = (1550e-9) ** 2 * 8.5 * ALPHA / 299792458.0
        restored = average_cyclic_matrix(pg, band=0.05, cd_phase_tau=tau_cd)
        assert np.linalg.norm(collapsed.m) < 0.2 * np.linalg.norm(restored.m)
        assert abs(restored.m[0, 0]) > 0.6

    def test_empty_band_rejected(self):
        w, *_ = make_waveform(1, 1024)
        pg = periodogram_blocks(w, nfft=512)
        with pytest.raises(ValueError, match="band"):
            average_cyclic_matrix(pg, band=0.0)


class TestCafMatrix:
    def test_no_cd_peak_at_zero(self):
        w, *_ = make_waveform(26, 1024)
        wf = matched_filter(w, _pulse())
        pg = periodogram_blocks(wf, nfft=512, skip_symbols=32)
        caf = caf_matrix(pg)
        assert caf.delays[np.argmax(np.abs(caf.entries[:, 0, 0]))] == 0.0

    def test_grid_symmetric(self):
        w, *_ = make_waveform(1, 512)
        pg = periodogram_blocks(w, nfft=512)
        caf = caf_matrix(pg)
        assert caf.delays[0] == -caf.delays[-1] - caf.grid_step
        assert np.any(caf.delays == 0.0)
        assert caf.entries.shape == (512, 2, 2)

    def test_matches_direct_double_sum(self):
        # FFT path without masking equals the O(N^2) oracle on the same data
        w, *_ = make_waveform(27, 256)
        pg = periodogram_blocks(w, nfft=512)
        caf = caf_matrix(pg, band_limit=None)
        delays, ref = direct_caf_matrix(w.x[:512], w.y[:512], ALPHA, w.sample_rate)
        assert np.array_equal(delays, caf.delays)
        err = np.abs(caf.entries - ref).max() / np.abs(ref).max()
        assert err < 1e-9

    def test_zero_delay_consistency_with_average(self):
        # the tau=0 entry of the unmasked transform equals the full-band
        # unnormalized frequency average
        w, *_ = make_waveform(28, 512)
        pg = periodogram_blocks(w, nfft=1024)
        caf = caf_matrix(pg, band_limit=None)
        c = average_cyclic_matrix(pg, band=64.0, cd_phase_tau=0.0, normalize=False)
        at_zero = caf.entries[np.where(caf.delays == 0.0)[0][0]]
        assert np.abs(at_zero - c.m).max() < 1e-12 * max(1.0, np.abs(c.m).max())


class TestAlgebraicInvariances:
    def test_trace_conjugation_invariance(self, rng):
        m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        worst = 0.0
        for _ in range(1000):
            v = JonesUnitary.random(rng).matrix
            worst = max(worst, abs(np.trace(v @ m @ v.conj().T) - np.trace(m)))
        assert worst < 1e-12

    def test_det_unitary_invariance(self, rng):
        m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        worst = 0.0
        for _ in range(1000):
            u = JonesUnitary.random(rng).matrix
            v = JonesUnitary.random(rng).matrix
            worst = max(worst, abs(np.linalg.det(u @ v @ m @ v.conj().T) - np.linalg.det(m)))
        assert worst < 1e-12

    def test_column_energy_invariance(self, rng):
        m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        e0 = abs(m[0, 0]) ** 2 + abs(m[1, 0]) ** 2
        worst = 0.0
        for _ in range(1000):
            u = JonesUnitary.random(rng).matrix
            col = u @ m[:, 0]
            worst = max(worst, abs(np.sum(np.abs(col) ** 2) - e0))
        assert worst < 1e-12


class TestValidation:
    def test_nfft_multiple_of_sps(self):
        w, *_ = make_waveform(1, 512)
        with pytest.raises(ValueError):
            periodogram_blocks(w, nfft=511)

    def test_estimate_validation(self):
        with pytest.raises(ValueError):
            CyclicMatrixEstimate(np.zeros((3, 3)), ALPHA, 0.0, 1)
        with pytest.raises(ValueError):
            CyclicMatrixEstimate(np.full((2, 2), np.nan), ALPHA, 0.0, 1)
        with pytest.raises(ValueError):
            CyclicMatrixEstimate(np.eye(2), ALPHA, 0.0, 0)


def _pulse():
    from cyclosync.waveform import PulseShape

    return PulseShape()
