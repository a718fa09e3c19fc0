"""Transient detection and the dual-resolution grid built from it.

Each source is scanned with the complex spectral difference: the previous
frame's magnitude combined with a linearly extrapolated phase predicts the
current frame, and the prediction error summed over bins measures how
abruptly the spectrum changes.  Per-source tracks are OR-ed, thinned so that
kept transients are at least two large windows apart, and the surviving
large frames receive small-window coverage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import median_filter

from .stft import DualGridSpec, GridSpec, stft

__all__ = [
    "TransientTrack",
    "complex_spectral_difference",
    "detect_transients",
    "combine",
    "clean",
    "build_dual_grid",
    "SpacingError",
]

# Threshold = rolling median + MAD_FACTOR * rolling MAD over a one second window.
MAD_FACTOR = 3.0
# A frame must also change by at least this fraction of its own scale.
RELATIVE_FLOOR = 0.1


class SpacingError(ValueError):
    pass


@dataclass(frozen=True)
class TransientTrack:
    """Binary transient indicator per large-grid frame."""

    flags: np.ndarray
    source_id: int | str = "combined"

    def __post_init__(self):
        flags = np.asarray(self.flags)
        if flags.ndim != 1 or not np.all((flags == 0) | (flags == 1)):
            raise ValueError("transient flags must be a binary sequence")
        flags = flags.astype(bool)
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)

    @classmethod
    def from_frames(cls, frames, num_frames: int, source_id="combined") -> "TransientTrack":
        flags = np.zeros(num_frames, dtype=bool)
        flags[np.asarray(frames, dtype=int)] = True
        return cls(flags, source_id)

    @property
    def frames(self) -> np.ndarray:
        return np.flatnonzero(self.flags)

    def __len__(self):
        return self.flags.size

    def __eq__(self, other):
        if not isinstance(other, TransientTrack):
            return NotImplemented
        return np.array_equal(self.flags, other.flags)

    __hash__ = None


def complex_spectral_difference(X: np.ndarray, rectify: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame complex spectral difference of a ``(frames, bins)`` STFT.

    The prediction for frame ``t`` keeps the magnitude of frame ``t - 1`` and
    extrapolates the phase as ``2 * phase[t-1] - phase[t-2]``.  Missing
    history is treated as zeros.

    With ``rectify`` only bins whose magnitude grows contribute, so energy
    decays (note offsets, the tail of a click) do not register as
    transients.

    Returns:
        ``(csd, scale)`` where ``scale`` is ``sum|X_t| + sum|prediction|``,
        an upper bound of ``csd`` used for normalisation.
    """
    mag = np.abs(X)
    phase = np.angle(X)
    prev_mag = np.zeros_like(mag)
    prev_mag[1:] = mag[:-1]
    pred_phase = np.zeros_like(phase)
    pred_phase[1:] = phase[:-1]
    pred_phase[2:] = 2.0 * phase[1:-1] - phase[:-2]
    diff = np.abs(X - prev_mag * np.exp(1j * pred_phase))
    if rectify:
        diff = np.where(mag > prev_mag, diff, 0.0)
    return diff.sum(axis=1), mag.sum(axis=1) + prev_mag.sum(axis=1)


def detect_transients(x, grid: GridSpec, source_id: int | str = 0) -> TransientTrack:
    """Flag large frames of ``x`` where the spectral difference peaks.

    A frame is flagged when its spectral difference is a local maximum,
    exceeds the rolling median plus three median absolute deviations over
    one second, and amounts to at least ``RELATIVE_FLOOR`` of the frame's
    own spectral scale.  Only frames lying fully inside the signal are
    eligible, so the zero padding at either end never reads as an onset.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2 * grid.window_length:
        raise ValueError("signal too short for transient detection")
    csd, scale = complex_spectral_difference(stft(x, grid))
    n = csd.size
    size = max(3, int(round(grid.sample_rate / grid.hop)) | 1)
    med = median_filter(csd, size=size, mode="nearest")
    mad = median_filter(np.abs(csd - med), size=size, mode="nearest")
    noise = 1e-9 * max(scale.max(), np.finfo(float).tiny)
    above = (csd > med + MAD_FACTOR * mad) & (csd > RELATIVE_FLOOR * scale) & (scale > noise)

    left = np.concatenate([[-np.inf], csd[:-1]])
    right = np.concatenate([csd[1:], [-np.inf]])
    peak = (csd > left) & (csd >= right)

    eligible = np.zeros(n, dtype=bool)
    eligible[grid.interior_frames()] = True
    return TransientTrack(above & peak & eligible, source_id)


def combine(tracks) -> TransientTrack:
    """Element-wise OR of per-source tracks."""
    tracks = list(tracks)
    if not tracks:
        raise ValueError("no tracks to combine")
    n = len(tracks[0])
    if any(len(t) != n for t in tracks):
        raise ValueError("transient tracks differ in length")
    return TransientTrack(np.logical_or.reduce([t.flags for t in tracks]), "combined")


def clean(track: TransientTrack, grid: GridSpec) -> TransientTrack:
    """Greedy left-to-right thinning to a spacing of two large windows.

    A flag survives only if it starts at least ``2 * window_length`` samples
    after the previously kept flag.
    """
    min_gap = 2 * grid.window_length
    kept = []
    for f in track.frames:
        if not kept or (f - kept[-1]) * grid.hop >= min_gap:
            kept.append(f)
    return TransientTrack.from_frames(kept, len(track), track.source_id)


def build_dual_grid(track: TransientTrack, large: GridSpec, small: GridSpec) -> DualGridSpec:
    """Dual-resolution grid with small windows at every flagged large frame."""
    if len(track) != large.num_frames:
        raise ValueError("track length does not match the large grid")
    if large.window_length % small.window_length:
        raise ValueError("small window must divide the large window")
    frames = track.frames
    if frames.size > 1 and np.any(np.diff(frames) * large.hop < 2 * large.window_length):
        raise SpacingError("spacing violation")
    return DualGridSpec(large, small, tuple(frames))
