"""Scenario specifications and sweep runners.

A ScenarioSpec is a fully seeded, JSON-serializable description of one
experiment; every runner maps a spec to a table of rows plus a summary.
Results are deterministic: per-point seeds are derived from (seed, point
index), so reruns and parallel execution produce identical tables.

The estimation signal path used by every runner is: channel output ->
(CD compensation when dispersion is configured) -> matched filter ->
cyclostationary statistics.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import channel as ch
from .cyclostats import CyclicMatrixEstimate, average_cyclic_matrix, caf_matrix, periodogram_blocks
from .estimators import (
    IndeterminatePspError,
    estimate_cd_robust,
    estimate_cd_single,
    estimate_dgd,
    estimate_pmd,
    estimate_psp,
    reconstruct_u,
)
from .reference import direct_caf_matrix
from .sync import EqualizerDivergence, LoopConfig, receive, track
from .ted import ted_det, ted_fourth_order, ted_square, ted_trace, ted_trace_u
from .waveform import Constellation, PulseShape, draw_symbol_indices, matched_filter, modulate

__all__ = [
    "ConfigError",
    "NumericalError",
    "ScenarioSpec",
    "RunResult",
    "run_scurve",
    "run_cd_sweep",
    "run_dgd_sweep",
    "run_track",
    "run_ber",
    "run_selftest",
    "render_csv",
    "spec_sha256",
    "RUNNERS",
]


class ConfigError(ValueError):
    """Invalid scenario configuration (maps to exit code 2 / HTTP 422)."""


class NumericalError(RuntimeError):
    """A run failed numerically (maps to exit code 3 / HTTP 500)."""


# ---------------------------------------------------------------------------
# scenario models
# ---------------------------------------------------------------------------

class JitterModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    amplitude_ui: float = 0.0
    frequency_hz: float = 0.0


class DgdSweepModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dgd_min_s: float
    dgd_max_s: float
    frequency_hz: float


class ChannelModel(BaseModel):
    """JSON-facing channel parameterization.

    cd_ns_per_nm is numerically equal to D*L in s/m.  psp = None draws a
    random principal state from the scenario seed; osnr_db = None means
    noiseless.
    """

    model_config = ConfigDict(extra="forbid")
    cd_ns_per_nm: float = 0.0
    wavelength_m: float = 1550e-9
    dgd_s: float = 0.0
    psp: Optional[tuple[float, float, float]] = None
    sop_mode: Literal["identity", "random", "rotating"] = "identity"
    sop_rate_rad_s: float = 0.0
    osnr_db: Optional[float] = None
    linewidth_hz: float = 0.0
    jitter: Optional[JitterModel] = None
    dgd_sinusoid: Optional[DgdSweepModel] = None


class ScurveParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    points: int = Field(64, ge=2)
    span_ui: float = Field(1.0, gt=0)


class CdSweepParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    psp_draws: int = Field(100, ge=1)
    blocks_per_draw: int = Field(8, ge=1)


class DgdSweepParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dgd_grid_s: list[float]
    blocks: int = Field(100, ge=1)


class TrackParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kp: float = 0.05
    ki: float = 0.002
    block_len_symbols: int = Field(512, ge=64)
    lock_threshold: float = 0.1
    theta0_ui: float = 0.0


class BerParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    taps_symbol: int = 7
    taps_fractional: int = 13
    spacings: list[Literal["symbol", "fractional"]] = ["symbol"]
    pilot_symbols: int = 2000
    discard_symbols: int = 4000
    lms_step: float = 1e-3
    pll_gain: float = 0.02
    track: TrackParams = TrackParams()


_SCURVE_DETECTORS = (
    "pxx",
    "square",
    "trace",
    "trace_u",
    "det",
    "fourth-power",
    "fourth-correlation",
    "fourth-moeneclaey",
    "fourth-re-combination",
)
_LOOP_DETECTORS = ("trace", "det", "trace_u", "adaptive", "square")


class ScenarioSpec(BaseModel):
    """One experiment: signal, channel, detectors, sweep axes, seed."""

    model_config = ConfigDict(extra="forbid")

    modulation: str = "16QAM"
    baud_rate_hz: float = 32e9
    sps: int = Field(2, ge=2)
    rolloff: float = Field(0.1, gt=0, le=1)
    span_symbols: int = 32
    symbol_count: int = Field(32768, ge=256)
    fft_size: int = 1024
    band: Optional[float] = None  # integration half-width / baudrate; None -> rolloff/2
    detectors: list[str] = ["trace", "det"]
    channel: ChannelModel = ChannelModel()
    seed: int
    jobs: int = Field(1, ge=1)

    scurve: Optional[ScurveParams] = None
    cd_sweep: Optional[CdSweepParams] = None
    dgd_sweep: Optional[DgdSweepParams] = None
    track: Optional[TrackParams] = None
    ber: Optional[BerParams] = None

    @model_validator(mode="after")
    def _check(self):
        if self.fft_size % self.sps:
            raise ValueError("fft_size must be a multiple of sps")
        if self.span_symbols % 2:
            raise ValueError("span_symbols must be even")
        return self

    @property
    def band_frac(self) -> float:
        return self.rolloff / 2 if self.band is None else self.band

    def pulse(self) -> PulseShape:
        return PulseShape(rolloff=self.rolloff, span=self.span_symbols)

    def constellation(self) -> Constellation:
        return Constellation.named(self.modulation)


@dataclass
class RunResult:
    subcommand: str
    columns: list[str]
    rows: list[list]
    summary: dict
    spec: ScenarioSpec


def spec_sha256(spec: ScenarioSpec) -> str:
    blob = json.dumps(spec.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _point_seeds(master: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(master).spawn(n)


def _seed_ints(ss: np.random.SeedSequence, n: int) -> list[int]:
    return [int(v) for v in ss.generate_state(n, dtype=np.uint64)]


def _channel_spec(cm: ChannelModel, rng: np.random.Generator, dgd_override=None) -> ch.ChannelSpec:
    psp = (
        ch.StokesVector(*cm.psp)
        if cm.psp is not None
        else ch.StokesVector.random(rng)
    )
    sop = None
    rate = 0.0
    if cm.sop_mode == "random":
        sop = ch.JonesUnitary.random(rng)
    elif cm.sop_mode == "rotating":
        rate = cm.sop_rate_rad_s
    jit = (
        ch.JitterSpec(cm.jitter.amplitude_ui, cm.jitter.frequency_hz)
        if cm.jitter is not None
        else None
    )
    sweep = (
        ch.DgdSweepSpec(cm.dgd_sinusoid.dgd_min_s, cm.dgd_sinusoid.dgd_max_s, cm.dgd_sinusoid.frequency_hz)
        if cm.dgd_sinusoid is not None
        else None
    )
    return ch.ChannelSpec(
        cd_total=cm.cd_ns_per_nm,
        wavelength=cm.wavelength_m,
        dgd=cm.dgd_s if dgd_override is None else dgd_override,
        psp=psp,
        sop=sop,
        sop_rate=rate,
        dgd_sweep=sweep,
        osnr_db=cm.osnr_db,
        linewidth=cm.linewidth_hz,
        jitter=jit,
    )


def _tx_waveform(spec: ScenarioSpec, seed: int, tau_g_s: float, count: int | None = None):
    const = spec.constellation()
    n = spec.symbol_count if count is None else count
    ia, ib = draw_symbol_indices(seed, n, const.points.size)
    w = modulate(
        const.points[ia],
        const.points[ib],
        spec.pulse(),
        spec.sps,
        tau_g=tau_g_s,
        baud_rate=spec.baud_rate_hz,
    )
    return w, ia, ib


def _estimation_front_end(spec: ScenarioSpec, w, estimate_cd: bool):
    """CD-compensate (from a robust estimate) and matched filter."""
    tau_cd_hat = 0.0
    dl_hat = 0.0
    if estimate_cd:
        wm = matched_filter(w, spec.pulse())
        pg = periodogram_blocks(wm, nfft=spec.fft_size, skip_symbols=spec.span_symbols)
        est = estimate_cd_robust(caf_matrix(pg), wavelength=spec.channel.wavelength_m)
        tau_cd_hat = est.tau_cd
        dl_hat = est.dl
        w = ch.compensate_cd(w, est.dl, spec.channel.wavelength_m)
    return matched_filter(w, spec.pulse()), tau_cd_hat, dl_hat


def _map_points(fn, n_points: int, jobs: int):
    if jobs <= 1 or n_points <= 1:
        return [fn(i) for i in range(n_points)]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, range(n_points)))


def _u_hat_for(c):
    try:
        est = estimate_pmd(c)
        return est.u_hat
    except (IndeterminatePspError, ValueError):
        return None


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

def _scurve_point(spec: ScenarioSpec, idx: int):
    params = spec.scurve or ScurveParams()
    tau_ui = -params.span_ui / 2 + params.span_ui * idx / (params.points - 1)
    seeds = _seed_ints(_point_seeds(spec.seed, params.points)[idx], 2)
    rng = np.random.default_rng(seeds[1])
    cspec = _channel_spec(spec.channel, rng)
    t0 = 1.0 / spec.baud_rate_hz
    w, _, _ = _tx_waveform(spec, seeds[0], tau_ui * t0)
    wout = ch.apply_channel(w, cspec, seed=seeds[1])
    wf, tau_cd_hat, _ = _estimation_front_end(
        spec, wout, estimate_cd=spec.channel.cd_ns_per_nm != 0.0
    )
    pg = periodogram_blocks(wf, nfft=spec.fft_size, skip_symbols=spec.span_symbols)
    c = average_cyclic_matrix(pg, band=spec.band_frac, cd_phase_tau=tau_cd_hat)
    guard = spec.span_symbols * spec.sps
    bx = wf.x[guard:-guard]
    by = wf.y[guard:-guard]
    rows = []
    for det in spec.detectors:
        if det == "trace":
            r = ted_trace(c)
        elif det == "det":
            r = ted_det(c)
        elif det == "trace_u":
            u = _u_hat_for(c)
            r = ted_trace_u(c, u) if u is not None else ted_trace(c)
        elif det == "pxx":
            m = c.m[0, 0]
            rows.append([det, tau_ui, float(-m.imag), float(m.real)])
            continue
        elif det == "square":
            r = ted_square(bx, by, spec.baud_rate_hz, wf.sample_rate)
        elif det.startswith("fourth-"):
            r = ted_fourth_order(bx, by, det.removeprefix("fourth-"))
        else:  # pragma: no cover - validated upstream
            raise ConfigError(f"detector {det!r} not supported in scurve")
        rows.append([det, tau_ui, r.e_t, r.aux_real])
    return rows


def run_scurve(spec: ScenarioSpec) -> RunResult:
    """Detector characteristic curves over a timing-phase sweep."""
    params = spec.scurve or ScurveParams()
    for det in spec.detectors:
        if det not in _SCURVE_DETECTORS:
            raise ConfigError(
                f"detectors[{spec.detectors.index(det)}]: {det!r} not usable in an "
                f"s-curve sweep (choose from {_SCURVE_DETECTORS})"
            )
        if det == "square" and spec.sps < 3:
            raise ConfigError(
                "detectors: the square detector needs sps >= 3 (its baudrate "
                "line is degenerate at 2 samples/symbol)"
            )
    rows_nested = _map_points(partial(_scurve_point, spec), params.points, spec.jobs)
    rows = [r for point in rows_nested for r in point]
    by_det = {}
    for det, tau, e, aux in rows:
        by_det.setdefault(det, []).append(e)
    summary = {
        f"amplitude_{det}": float((np.max(v) - np.min(v)) / 2) for det, v in by_det.items()
    }
    return RunResult("scurve", ["detector", "tau_g_ui", "e_t", "aux_real"], rows, summary, spec)


def _cd_point(spec: ScenarioSpec, idx: int):
    params = spec.cd_sweep or CdSweepParams()
    seeds = _seed_ints(_point_seeds(spec.seed, params.psp_draws)[idx], 3)
    rng = np.random.default_rng(seeds[2])
    psp = ch.StokesVector.random(rng)
    cm = spec.channel.model_copy(update={"psp": (psp.p1, psp.p2, psp.p3), "sop_mode": "random"})
    cspec = _channel_spec(cm, rng)
    t0 = 1.0 / spec.baud_rate_hz
    tau_g = rng.uniform(-0.5, 0.5) * t0
    n_sym = params.blocks_per_draw * spec.fft_size // spec.sps + 2 * spec.span_symbols
    w, _, _ = _tx_waveform(spec, seeds[0], tau_g, count=n_sym)
    wout = ch.apply_channel(w, cspec, seed=seeds[1])
    wf = matched_filter(wout, spec.pulse())
    pg = periodogram_blocks(
        wf, nfft=spec.fft_size, skip_symbols=spec.span_symbols, overlap=True
    )
    caf = caf_matrix(pg)
    single = estimate_cd_single(caf, wavelength=spec.channel.wavelength_m)
    robust = estimate_cd_robust(caf, wavelength=spec.channel.wavelength_m)
    out = []
    for name, est in (("single", single), ("robust", robust)):
        out.append(
            [
                idx,
                psp.p1,
                psp.p2,
                psp.p3,
                tau_g / t0,
                name,
                est.dl,
                est.dl - spec.channel.cd_ns_per_nm,
                est.low_confidence,
                est.grid_step * ch.SPEED_OF_LIGHT * t0 / spec.channel.wavelength_m ** 2,
            ]
        )
    return out


def run_cd_sweep(spec: ScenarioSpec) -> RunResult:
    """CD estimation over random principal-state draws at fixed dispersion."""
    params = spec.cd_sweep or CdSweepParams()
    rows_nested = _map_points(partial(_cd_point, spec), params.psp_draws, spec.jobs)
    rows = [r for point in rows_nested for r in point]
    true_dl = spec.channel.cd_ns_per_nm
    rob = [r for r in rows if r[5] == "robust"]
    sing = [r for r in rows if r[5] == "single"]
    step = rob[0][9] if rob else float("nan")
    summary = {
        "true_dl_ns_per_nm": true_dl,
        "grid_step_ns_per_nm": step,
        "robust_max_abs_err": float(max(abs(r[7]) for r in rob)),
        "robust_within_one_step": int(sum(abs(r[7]) <= step + 1e-12 for r in rob)),
        "single_fail_or_flag": int(
            sum((abs(r[7]) > step + 1e-12) or r[8] for r in sing)
        ),
        "draws": params.psp_draws,
    }
    return RunResult(
        "cd-sweep",
        [
            "draw", "p1", "p2", "p3", "tau_g_ui", "estimator",
            "dl_hat_ns_per_nm", "err_ns_per_nm", "low_confidence", "grid_step_ns_per_nm",
        ],
        rows,
        summary,
        spec,
    )


def _dgd_point(spec: ScenarioSpec, idx: int):
    params = spec.dgd_sweep
    dgd = params.dgd_grid_s[idx]
    seeds = _seed_ints(_point_seeds(spec.seed, len(params.dgd_grid_s))[idx], 3)
    rng = np.random.default_rng(seeds[2])
    psp = ch.StokesVector.random(rng)
    cm = spec.channel.model_copy(
        update={"psp": (psp.p1, psp.p2, psp.p3), "dgd_s": dgd, "sop_mode": "random"}
    )
    cspec = _channel_spec(cm, rng)
    t0 = 1.0 / spec.baud_rate_hz
    tau_g = rng.uniform(-0.5, 0.5) * t0
    n_sym = params.blocks * spec.fft_size // spec.sps + 2 * spec.span_symbols
    w, _, _ = _tx_waveform(spec, seeds[0], tau_g, count=n_sym)
    wout = ch.apply_channel(w, cspec, seed=seeds[1])
    wf, tau_cd_hat, _ = _estimation_front_end(
        spec, wout, estimate_cd=spec.channel.cd_ns_per_nm != 0.0
    )
    pg = periodogram_blocks(
        wf, nfft=spec.fft_size, skip_symbols=spec.span_symbols, max_blocks=params.blocks
    )
    c = average_cyclic_matrix(pg, band=spec.band_frac, cd_phase_tau=tau_cd_hat)
    est = estimate_pmd(c)
    if est.psp_hat is not None:
        cosang = float(np.clip(np.dot(est.psp_hat.as_array(), psp.as_array()), -1, 1))
        ang_deg = float(np.degrees(np.arccos(cosang)))
    else:
        ang_deg = float("nan")
    return [
        [
            dgd,
            est.dgd_hat,
            est.dgd_hat - dgd,
            ang_deg,
            est.low_confidence,
        ]
    ]


def run_dgd_sweep(spec: ScenarioSpec) -> RunResult:
    """DGD and principal-state estimation over a DGD grid."""
    if spec.dgd_sweep is None:
        raise ConfigError("dgd_sweep: section required for the dgd-sweep subcommand")
    n = len(spec.dgd_sweep.dgd_grid_s)
    if n == 0:
        raise ConfigError("dgd_sweep.dgd_grid_s: must be non-empty")
    rows_nested = _map_points(partial(_dgd_point, spec), n, spec.jobs)
    rows = [r for point in rows_nested for r in point]
    errs = [abs(r[2]) for r in rows]
    angs = [r[3] for r in rows if np.isfinite(r[3])]
    summary = {
        "max_abs_dgd_err_s": float(max(errs)),
        "max_psp_err_deg": float(max(angs)) if angs else float("nan"),
        "points": n,
    }
    return RunResult(
        "dgd-sweep",
        ["dgd_true_s", "dgd_hat_s", "err_s", "psp_err_deg", "low_confidence"],
        rows,
        summary,
        spec,
    )


def _loop_config(spec: ScenarioSpec, params: TrackParams, detector: str) -> LoopConfig:
    return LoopConfig(
        kp=params.kp,
        ki=params.ki,
        block_len=params.block_len_symbols,
        detector=detector,
        band=spec.band_frac,
        lock_threshold=params.lock_threshold,
    )


def run_track(spec: ScenarioSpec) -> RunResult:
    """Closed-loop tracking trajectories for each configured detector."""
    params = spec.track or TrackParams()
    for det in spec.detectors:
        if det not in _LOOP_DETECTORS:
            raise ConfigError(f"detectors: {det!r} is not a loop detector {_LOOP_DETECTORS}")
    seeds = _seed_ints(np.random.SeedSequence(spec.seed), 3)
    rng = np.random.default_rng(seeds[2])
    cspec = _channel_spec(spec.channel, rng)
    w, _, _ = _tx_waveform(spec, seeds[0], tau_g_s=0.0)
    wout = ch.apply_channel(w, cspec, seed=seeds[1])
    wf, tau_cd_hat, _ = _estimation_front_end(
        spec, wout, estimate_cd=spec.channel.cd_ns_per_nm != 0.0
    )
    injected = ch.channel_jitter_trajectory(len(wf), cspec, wf.sample_rate, seeds[1])
    rows = []
    summary = {}
    nfft = params.block_len_symbols * spec.sps
    for det in spec.detectors:
        cfg = _loop_config(spec, params, det)
        rec = track(wf, cfg, tau_cd=0.0, theta0=params.theta0_ui)
        nb = rec.e_t.size
        centers = 64 * spec.sps + np.arange(nb) * nfft + nfft // 2
        inj = injected[np.minimum(centers, injected.size - 1)]
        for i in range(nb):
            rows.append(
                [det, i, float(rec.phase_ui[i]), float(rec.phase_unwrapped_ui[i]),
                 float(rec.e_t[i]), bool(rec.locked[i]), float(inj[i])]
            )
        if np.std(inj) > 0 and np.std(rec.phase_unwrapped_ui) > 0:
            corr = float(np.corrcoef(rec.phase_unwrapped_ui, inj)[0, 1])
        else:
            corr = float("nan")
        summary[f"lock_{det}"] = bool(rec.lock_achieved)
        summary[f"resets_{det}"] = rec.resets
        summary[f"jitter_correlation_{det}"] = corr
    return RunResult(
        "track",
        ["detector", "block", "phase_ui", "phase_unwrapped_ui", "e_t", "locked", "injected_ui"],
        rows,
        summary,
        spec,
    )


def run_ber(spec: ScenarioSpec) -> RunResult:
    """End-to-end chain: CD estimate/compensate, matched filter, timing loop,
    LMS/PLL receiver, BER against the transmitted bits."""
    params = spec.ber or BerParams()
    for det in spec.detectors:
        if det not in _LOOP_DETECTORS:
            raise ConfigError(f"detectors: {det!r} is not a loop detector {_LOOP_DETECTORS}")
    seeds = _seed_ints(np.random.SeedSequence(spec.seed), 3)
    rng = np.random.default_rng(seeds[2])
    cspec = _channel_spec(spec.channel, rng)
    const = spec.constellation()
    w, ia, ib = _tx_waveform(spec, seeds[0], tau_g_s=0.0)
    wout = ch.apply_channel(w, cspec, seed=seeds[1])
    wf, tau_cd_hat, dl_hat = _estimation_front_end(
        spec, wout, estimate_cd=spec.channel.cd_ns_per_nm != 0.0
    )
    rows = []
    for det in spec.detectors:
        cfg = _loop_config(spec, params.track, det)
        rec, wc = track(wf, cfg, tau_cd=0.0, return_corrected=True)
        for spacing in params.spacings:
            taps = params.taps_symbol if spacing == "symbol" else params.taps_fractional
            try:
                res = receive(
                    wc,
                    ia,
                    ib,
                    const,
                    taps=taps,
                    spacing=spacing,
                    pilot_symbols=params.pilot_symbols,
                    lms_step=params.lms_step,
                    pll_gain=params.pll_gain,
                    discard_symbols=params.discard_symbols,
                )
                rows.append(
                    [det, spacing, taps, res.ber, res.bit_errors, res.total_bits,
                     res.mse_tail, bool(rec.lock_achieved)]
                )
            except (EqualizerDivergence, ValueError):
                rows.append([det, spacing, taps, 1.0, -1, 0, float("inf"), bool(rec.lock_achieved)])
    summary = {"dl_hat_ns_per_nm": dl_hat}
    for det, spacing, taps, ber, *_ in rows:
        summary[f"ber_{det}_{spacing}"] = ber
    return RunResult(
        "ber",
        ["detector", "spacing", "taps", "ber", "bit_errors", "total_bits", "mse_tail", "lock"],
        rows,
        summary,
        spec,
    )


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------

def run_selftest(seed: int = 7) -> RunResult:
    """Fast consistency suite: FFT statistics against direct double sums and
    the exact algebraic invariances the detectors rely on."""
    rng = np.random.default_rng(seed)
    checks = []

    spec = ScenarioSpec(seed=seed, symbol_count=256, fft_size=512)
    w, _, _ = _tx_waveform(spec, seed, tau_g_s=0.1 / spec.baud_rate_hz, count=256)
    pg = periodogram_blocks(w, nfft=512)
    caf = caf_matrix(pg, band_limit=None)
    delays, ref = direct_caf_matrix(w.x[:512], w.y[:512], spec.baud_rate_hz, w.sample_rate)
    err = np.max(np.abs(caf.entries - ref)) / np.max(np.abs(ref))
    checks.append(("caf_fft_vs_direct_double_sum", err < 1e-9, f"max rel err {err:.3e}"))

    worst_tr = worst_det = worst_col = 0.0
    m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    for _ in range(200):
        v = ch.JonesUnitary.random(rng).matrix
        u = ch.JonesUnitary.random(rng).matrix
        worst_tr = max(worst_tr, abs(np.trace(v @ m @ v.conj().T) - np.trace(m)))
        worst_det = max(
            worst_det, abs(np.linalg.det(u @ v @ m @ v.conj().T) - np.linalg.det(m))
        )
        col = u @ m[:, 0]
        worst_col = max(
            worst_col, abs(np.sum(np.abs(col) ** 2) - np.sum(np.abs(m[:, 0]) ** 2))
        )
    checks.append(("trace_rotation_invariance", worst_tr < 1e-12, f"worst {worst_tr:.2e}"))
    checks.append(("det_unitary_invariance", worst_det < 1e-12, f"worst {worst_det:.2e}"))
    checks.append(("column_energy_invariance", worst_col < 1e-12, f"worst {worst_col:.2e}"))

    alpha = 32e9
    worst_rt = 0.0
    for _ in range(50):
        dgd = rng.uniform(0.5e-12, 0.5 / alpha - 0.5e-12)
        psp = ch.StokesVector.random(rng)
        u = ch.pmd_matrix(dgd, psp, alpha)
        c = CyclicMatrixEstimate(np.exp(-1j * rng.uniform(0, 2 * np.pi)) * u.matrix, alpha, 0.0, 1)
        dgd_hat = estimate_dgd(c)
        psp_hat = estimate_psp(c)
        u_hat = reconstruct_u(dgd_hat, psp_hat, alpha)
        dist = np.sqrt(max(0.0, 4 - 2 * abs(np.trace(u.matrix @ u_hat.matrix.conj().T))))
        worst_rt = max(worst_rt, dist)
    checks.append(("pmd_roundtrip_recovery", worst_rt < 1e-6, f"worst matrix dist {worst_rt:.2e}"))

    rows = [[name, ok, detail] for name, ok, detail in checks]
    passed = all(ok for _, ok, _ in checks)
    return RunResult(
        "selftest",
        ["check", "passed", "detail"],
        rows,
        {"passed": passed},
        ScenarioSpec(seed=seed),
    )


# ---------------------------------------------------------------------------
# CSV rendering
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_csv(result: RunResult) -> str:
    """Deterministic CSV with a header comment block carrying the resolved
    spec and its hash; identical results render byte-identically."""
    lines = [
        f"# cyclosync {result.subcommand}",
        f"# spec_sha256: {spec_sha256(result.spec)}",
        f"# seed: {result.spec.seed}",
        "# spec: "
        + json.dumps(result.spec.model_dump(mode="json"), sort_keys=True, separators=(",", ":")),
    ]
    for key in sorted(result.summary):
        lines.append(f"# summary {key}: {_fmt(result.summary[key])}")
    lines.append(",".join(result.columns))
    for row in result.rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


RUNNERS = {
    "scurve": run_scurve,
    "cd-sweep": run_cd_sweep,
    "dgd-sweep": run_dgd_sweep,
    "track": run_track,
    "ber": run_ber,
}
