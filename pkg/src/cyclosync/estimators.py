"""Channel parameter estimation from cyclostationary statistics.

CD shows up as a delay of the cyclic-correlation peak; the peak position
maps to dispersion through DL = c T0 / lambda^2 * tau_peak.  The
de-rotated cyclic matrix is (up to a common timing phase) the first-order
PMD matrix, from which DGD and the principal state follow via its
eigenvalues and Pauli traces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PAULI, SPEED_OF_LIGHT, JonesUnitary, StokesVector, pmd_matrix
from .cyclostats import CafMatrix, CyclicMatrixEstimate

__all__ = [
    "CdEstimate",
    "PmdEstimate",
    "IndeterminatePspError",
    "estimate_cd_single",
    "estimate_cd_robust",
    "estimate_pmd_matrix",
    "estimate_dgd",
    "estimate_psp",
    "reconstruct_u",
    "estimate_pmd",
]

# peak-to-median ratio below which a single-polarization peak search is
# considered unreliable (PMD can null the xx tone entirely)
LOW_CONFIDENCE_PEAK_RATIO = 3.0

# fraction of the rotation-invariant column energy that the xx tone must
# carry at the peak; below it the xx estimate runs on a vanishing share of
# the clock energy (|a|^2 of the PMD matrix) no matter how deeply the
# statistics are averaged, and the peak-to-median check alone goes quiet
LOW_CONFIDENCE_XX_SHARE = 0.02

# matrices with a larger singular-value spread than this are treated as
# unreliable PMD estimates
LOW_CONFIDENCE_CONDITION = 100.0

# smallest usable norm of the raw Pauli-trace vector; below it the PSP is
# unobservable (DGD near 0 or near half a symbol)
PSP_NORM_FLOOR = 0.05


class IndeterminatePspError(ValueError):
    """The principal state is unobservable from the supplied matrix."""


@dataclass
class CdEstimate:
    """Cyclic-correlation peak delay and the implied dispersion."""

    tau_cd: float
    dl: float
    peak_metric: float
    grid_step: float
    low_confidence: bool = False
    tau_refined: float | None = None


@dataclass
class PmdEstimate:
    """Bundle of PMD-related estimates from one cyclic matrix."""

    u_t: CyclicMatrixEstimate
    dgd_hat: float
    psp_hat: StokesVector | None
    u_hat: JonesUnitary | None
    low_confidence: bool = False


def _peak_search(caf: CafMatrix, metric: np.ndarray, refine: bool):
    idx = int(np.argmax(metric))
    tau = float(caf.delays[idx])
    refined = None
    if refine and 0 < idx < metric.size - 1:
        y0, y1, y2 = metric[idx - 1], metric[idx], metric[idx + 1]
        denom = y0 - 2 * y1 + y2
        if denom != 0:
            refined = tau + 0.5 * (y0 - y2) / denom * caf.grid_step
    return idx, tau, refined


def _dl_from_tau(tau: float, alpha: float, wavelength: float) -> float:
    t0 = 1.0 / alpha
    return SPEED_OF_LIGHT * t0 / wavelength ** 2 * tau


def estimate_cd_single(
    caf: CafMatrix, wavelength: float = 1550e-9, refine: bool = False
) -> CdEstimate:
    """CD from the xx cyclic-correlation peak alone.

    Loses sensitivity (and flags low confidence) when PMD rotates the xx
    clock tone away, i.e. when the PMD matrix element ``a`` approaches zero.
    """
    if caf.delays.size == 0:
        raise ValueError("empty CAF")
    metric = np.abs(caf.entries[:, 0, 0]) ** 2
    idx, tau, refined = _peak_search(caf, metric, refine)
    median = float(np.median(metric))
    peak = float(metric[idx])
    column = np.abs(caf.entries[:, 0, 0]) ** 2 + np.abs(caf.entries[:, 1, 0]) ** 2
    col_peak = float(column.max())
    share = peak / col_peak if col_peak > 0 else 0.0
    low = (
        median <= 0
        or peak / median < LOW_CONFIDENCE_PEAK_RATIO
        or share < LOW_CONFIDENCE_XX_SHARE
    )
    return CdEstimate(
        tau_cd=tau,
        dl=_dl_from_tau(tau, caf.alpha, wavelength),
        peak_metric=peak,
        grid_step=caf.grid_step,
        low_confidence=low,
        tau_refined=refined,
    )


def estimate_cd_robust(
    caf: CafMatrix, wavelength: float = 1550e-9, refine: bool = False
) -> CdEstimate:
    """CD from the first-column energy |R_xx|^2 + |R_yx|^2.

    The column energy is invariant under any polarization rotation or
    first-order PMD (unitary column), and the timing phase is a pure common
    phase, so the peak survives every channel polarization state.
    """
    if caf.delays.size == 0:
        raise ValueError("empty CAF")
    metric = np.abs(caf.entries[:, 0, 0]) ** 2 + np.abs(caf.entries[:, 1, 0]) ** 2
    idx, tau, refined = _peak_search(caf, metric, refine)
    return CdEstimate(
        tau_cd=tau,
        dl=_dl_from_tau(tau, caf.alpha, wavelength),
        peak_metric=float(metric[idx]),
        grid_step=caf.grid_step,
        low_confidence=not np.any(metric > 0),
        tau_refined=refined,
    )


def estimate_pmd_matrix(c: CyclicMatrixEstimate) -> tuple[CyclicMatrixEstimate, bool]:
    """Normalize a de-rotated cyclic matrix to unit mean singular value.

    Returns the normalized estimate (approximately exp(-j phi0) U) and a
    low-confidence flag raised when the matrix is far from unitary
    (condition number above LOW_CONFIDENCE_CONDITION).
    """
    sv = np.linalg.svd(c.m, compute_uv=False)
    if sv[0] == 0:
        raise ValueError("zero matrix cannot estimate a PMD matrix")
    low = bool(sv[1] == 0 or sv[0] / sv[1] > LOW_CONFIDENCE_CONDITION)
    m = c.m / sv.mean()
    return CyclicMatrixEstimate(m, c.alpha, c.tau, c.n_blocks), low


def estimate_dgd(u_t: CyclicMatrixEstimate | np.ndarray, alpha: float | None = None) -> float:
    """DGD from the eigenvalue pair of the PMD matrix estimate.

    |arg(rho1 conj(rho2))| / (2 pi alpha), wrapped into [0, T0/2].  The
    common phase of the matrix cancels in the eigenvalue product, so the
    estimate is timing-phase free.
    """
    if isinstance(u_t, CyclicMatrixEstimate):
        m, alpha = u_t.m, u_t.alpha
    else:
        m = np.asarray(u_t, dtype=complex)
        if alpha is None:
            raise ValueError("alpha required when passing a bare matrix")
    if abs(np.linalg.det(m)) < 1e-12:
        raise ValueError("singular matrix has no eigenvalue pair to compare")
    rho = np.linalg.eigvals(m)
    return abs(np.angle(rho[0] * np.conj(rho[1]))) / (2 * np.pi * alpha)


def _raw_psp_vector(m: np.ndarray) -> np.ndarray:
    tr = np.trace(m)
    return np.array([np.imag(np.trace(s @ m) * np.conj(tr)) for s in PAULI])


def estimate_psp(u_t: CyclicMatrixEstimate, alpha: float | None = None) -> StokesVector:
    """Principal state from Pauli traces of the PMD matrix estimate.

    The raw vector Im[trace(sigma_i M) conj(trace M)] is proportional to
    -sin(2 pi alpha dgd) p, so its norm collapses when the DGD approaches 0
    or half a symbol; those cases raise IndeterminatePspError.  The overall
    sign is fixed by picking the candidate whose reconstructed matrix best
    matches the estimate.
    """
    m = u_t.m
    alpha = u_t.alpha if alpha is None else alpha
    sv = np.linalg.svd(m, compute_uv=False)
    scale = sv.mean()
    if scale == 0:
        raise IndeterminatePspError("zero matrix")
    mn = m / scale
    raw = _raw_psp_vector(mn)
    norm = np.linalg.norm(raw)
    if norm < PSP_NORM_FLOOR:
        raise IndeterminatePspError(
            f"raw PSP vector norm {norm:.3g} below floor: DGD is near 0 or T0/2"
        )
    p = raw / norm
    dgd = estimate_dgd(u_t)
    best = None
    for cand in (p, -p):
        u = pmd_matrix(dgd, StokesVector(*cand), alpha).matrix
        score = abs(np.trace(mn @ u.conj().T))
        if best is None or score > best[0]:
            best = (score, cand)
    return StokesVector(*best[1])


def reconstruct_u(dgd_hat: float, psp_hat: StokesVector, alpha: float) -> JonesUnitary:
    """PMD matrix rebuilt from DGD and PSP estimates.

    Valid modulo sign only when the true DGD is strictly below half a
    symbol; beyond that the wrapped DGD estimate flips the reconstruction
    relative to the true matrix.
    """
    return pmd_matrix(dgd_hat, psp_hat, alpha)


def estimate_pmd(c: CyclicMatrixEstimate) -> PmdEstimate:
    """Full PMD estimation chain from a de-rotated cyclic matrix."""
    u_t, low = estimate_pmd_matrix(c)
    dgd = estimate_dgd(u_t)
    try:
        psp = estimate_psp(u_t)
        u_hat = reconstruct_u(dgd, psp, u_t.alpha)
    except IndeterminatePspError:
        psp = None
        u_hat = None
        low = True
    return PmdEstimate(u_t=u_t, dgd_hat=dgd, psp_hat=psp, u_hat=u_hat, low_confidence=low)
