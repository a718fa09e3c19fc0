"""Wiener masking, MISI and activity-masked iterative reconstruction.

All functions take spectrograms as arrays laid out by a grid from
:mod:`issir.stft`; the arithmetic here is element-wise, so uniform and
dual-resolution grids are handled identically and couple only through
:func:`issir.stft.project`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .stft import istft, project, stft

__all__ = [
    "ReconParams",
    "wiener_masks",
    "wiener_separate",
    "remix_error",
    "misi",
    "activity_masks",
    "error_share",
    "issir_iterate",
    "issir_reconstruct",
]

log = logging.getLogger(__name__)

MODES = ("M1", "M2", "M3")


@dataclass(frozen=True)
class ReconParams:
    """Reconstruction settings.

    ``mode`` selects how the remix error is shared:

    * ``M1``: divide by the fixed constant ``D`` inside the activity domain.
    * ``M2``: divide by the per-bin count of active sources.
    * ``M3``: as ``M2`` but with every source active everywhere.
    """

    D: float = 40.0
    rho: float = 0.01
    n_iter: int = 50
    mode: str = "M1"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.D >= 1:
            raise ValueError("D must be >= 1")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.n_iter < 0:
            raise ValueError("n_iter must be >= 0")


def _stack(arrays, name) -> np.ndarray:
    arrays = [np.asarray(a) for a in arrays]
    if not arrays:
        raise ValueError(f"no {name}")
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ValueError(f"{name} differ in shape")
    return np.stack(arrays)


def wiener_masks(powers) -> np.ndarray:
    """Relative energy contribution of each source.

    Args:
        powers: ``J >= 2`` non-negative power spectrograms ``|S_j|**2``.

    Returns:
        Array of shape ``(J, ...)``, summing to one at every bin.  Bins where
        all sources are silent get ``1 / J``.
    """
    P = _stack(powers, "power spectrograms").astype(float)
    if P.shape[0] < 2:
        raise ValueError("Wiener masks need at least two sources")
    total = P.sum(axis=0)
    J = P.shape[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        alpha = np.where(total > 0, P / total, 1.0 / J)
    return alpha


def wiener_separate(M, masks, grid) -> list[np.ndarray]:
    """Time-domain sources ``istft(alpha_j * M)``."""
    M = np.asarray(M)
    masks = np.asarray(masks)
    if masks.shape[1:] != M.shape:
        raise ValueError("masks do not match the mixture spectrogram")
    return [istft(a * M, grid) for a in masks]


def remix_error(M, estimates) -> np.ndarray:
    """``M - sum(estimates)``."""
    M = np.asarray(M)
    for e in estimates:
        if np.shape(e) != M.shape:
            raise ValueError("estimate does not match the mixture spectrogram")
    return M - sum(estimates)


def misi(M, target_mags, n_iter: int, grid) -> list[np.ndarray]:
    """Multiple input spectrogram inversion.

    Each iteration projects every estimate, shares the remix error equally,
    and keeps only the phase of the corrected estimate; magnitudes stay at
    ``target_mags`` throughout.  Phases start from the mixture.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    M = np.asarray(M)
    mags = _stack(target_mags, "target magnitudes")
    if mags.shape[1:] != M.shape:
        raise ValueError("target magnitudes do not match the mixture spectrogram")
    J = mags.shape[0]
    est = [m * np.exp(1j * np.angle(M)) for m in mags]
    for _ in range(n_iter):
        proj = [project(s, grid) for s in est]
        err = remix_error(M, proj)
        est = [m * np.exp(1j * np.angle(p + err / J)) for m, p in zip(mags, proj)]
    return est


def activity_masks(masks, rho: float) -> np.ndarray:
    """Binary activity domain: ``alpha_j > rho``."""
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    return np.asarray(masks) > rho


def error_share(err, activity, params: ReconParams) -> np.ndarray:
    """Portion of the remix error ``err`` handed to each active source.

    ``M1`` divides by the constant ``D``; ``M2``/``M3`` divide by the number
    of active sources at each bin, and bins with no active source get none.
    """
    if params.mode == "M1":
        return err / params.D
    count = np.sum(activity, axis=0)
    share = np.zeros_like(err)
    np.divide(err, count, out=share, where=count > 0)
    return share


def issir_iterate(M, init, activity, params: ReconParams, grid, reimpose_magnitude=None):
    """Activity-masked remix-error distribution alternating with projection.

    Each iteration computes, for every source ``j``::

        S_j <- Psi_j * (project(S_j) + E / D)

    where ``E`` is the mixture minus the sum of the projected estimates.
    The modulus evolves freely unless ``reimpose_magnitude`` is given, in
    which case those magnitudes are snapped back after each step (this is
    exactly MISI when ``Psi`` is all ones and ``D`` equals the source count).

    Args:
        M: mixture spectrogram.
        init: initial estimates, already masked by their activity domains.
        activity: ``(J, ...)`` binary activity domain; ignored in mode M3.
        params: reconstruction settings; ``params.n_iter`` iterations run.
        grid: analysis grid of ``M``.
        reimpose_magnitude: optional ``(J, ...)`` magnitudes.

    Returns:
        List of ``J`` estimates after the last iteration.
    """
    M = np.asarray(M)
    est = list(_stack(init, "initial estimates"))
    if est[0].shape != M.shape:
        raise ValueError("initial estimates do not match the mixture spectrogram")
    if params.mode == "M3":
        psi = np.ones((len(est),) + M.shape, dtype=bool)
    else:
        psi = np.asarray(activity, dtype=bool)
        if psi.shape != (len(est),) + M.shape:
            raise ValueError("activity masks do not match the estimates")
    for _ in range(params.n_iter):
        proj = [project(s, grid) for s in est]
        err = remix_error(M, proj)
        share = error_share(err, psi, params)
        est = [p_j * (p + share) for p_j, p in zip(psi, proj)]
        if reimpose_magnitude is not None:
            est = [m * np.exp(1j * np.angle(e)) for m, e in zip(reimpose_magnitude, est)]
    return est


def issir_reconstruct(mix, bundle, params: ReconParams) -> list[np.ndarray]:
    """Decoder-side reconstruction from the mixture and decoded side information.

    Sources start from the dequantized magnitudes with the mixture phase,
    masked by the decoded activity domain; :func:`issir_iterate` then runs
    ``params.n_iter`` iterations and each final estimate is masked once more
    before synthesis.
    """
    from .codec.sideinfo import decoded_activity, decoded_magnitudes, grid_from_bundle

    grid = grid_from_bundle(bundle)
    M = stft(mix, grid)
    mags = decoded_magnitudes(bundle, grid)
    psi = decoded_activity(bundle, grid)
    if params.mode == "M3":
        psi = np.ones_like(psi)
    phase = np.exp(1j * np.angle(M))
    init = [p * m * phase for p, m in zip(psi, mags)]
    log.debug("issir: %d sources, %d iterations, mode %s", len(init), params.n_iter, params.mode)
    est = issir_iterate(M, init, psi, params, grid) if params.n_iter else init
    return [istft(p * e, grid) for p, e in zip(psi, est)]
