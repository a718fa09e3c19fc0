"""Band grouping, log-quantization and activity packing of source spectrograms."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "CodecConfig",
    "SILENT",
    "NORM_SILENT",
    "erb_rate",
    "band_edges",
    "band_pool",
    "round_half_away",
    "quantize_spectrogram",
    "dequantize_spectrogram",
    "encode_activity",
    "decode_activity",
]

# Level index of a band discarded by the energy threshold.
SILENT = np.iinfo(np.int32).min
# Normalisation of a source with no energy at all (stands for -inf dB).
NORM_SILENT = np.iinfo(np.int32).min

MAX_THRESHOLD_DB = -20.0
BAND_LADDER = (250, 125, 75)


@dataclass(frozen=True)
class CodecConfig:
    """Encoder settings.

    Attributes:
        u: quantization step in dB (carried on the wire in centi-dB).
        T: energy threshold in dB below each source's loudest band; at most
            -20 dB.  With a target rate this is the most permissive value
            the rate control starts from.
        rho: activity threshold on the Wiener mask.
        bands_large: frequency bands on the large window.
        bands_small: frequency bands on the small window.
        window_large, window_small: STFT sizes in samples.
        overlap: 0.5 or 0.75, shared by both resolutions.
        dual: add small windows at detected transients.
        target_rate: optional target in kb/source/s.
        backend: entropy coder, see :mod:`issir.codec.bitstream`.
    """

    u: float = 1.0
    T: float = -120.0
    rho: float = 0.01
    bands_large: int = 250
    bands_small: int = 25
    window_large: int = 2048
    window_small: int = 256
    overlap: float = 0.5
    dual: bool = False
    target_rate: float | None = None
    backend: str = "zlib"

    def __post_init__(self):
        if not self.u > 0 or self.u_cdb < 1:
            raise ValueError("quantization step u must be at least 0.01 dB")
        if self.T > MAX_THRESHOLD_DB:
            raise ValueError(f"threshold T must be <= {MAX_THRESHOLD_DB} dB, got {self.T}")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not 1 <= self.bands_large <= self.window_large // 2 + 1:
            raise ValueError("bands_large must lie between 1 and the large-window bin count")
        if not 1 <= self.bands_small <= self.window_small // 2 + 1:
            raise ValueError("bands_small must lie between 1 and the small-window bin count")
        if self.overlap not in (0.5, 0.75):
            raise ValueError("overlap must be 0.5 or 0.75")
        if self.target_rate is not None and not self.target_rate > 0:
            raise ValueError("target rate must be positive")

    @property
    def u_cdb(self) -> int:
        return int(round_half_away(self.u * 100))

    @property
    def T_cdb(self) -> int:
        return int(round_half_away(self.T * 100))

    @property
    def rho_ppm(self) -> int:
        return int(round_half_away(self.rho * 1e6))

    def evolve(self, **changes) -> "CodecConfig":
        return replace(self, **changes)


def round_half_away(x):
    """Round to nearest, ties away from zero."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def erb_rate(freq_hz):
    """Glasberg & Moore ERB-rate (ERB number) of a frequency in Hz."""
    return 21.4 * np.log10(1.0 + 0.00437 * np.asarray(freq_hz, dtype=float))


def band_edges(num_bands: int, num_bins: int, sample_rate: float = 44100.0) -> np.ndarray:
    """Contiguous bin ranges of roughly equal ERB-rate width.

    Band ``k`` spans bins ``edges[k]:edges[k + 1]``.  Widths never decrease
    with frequency: each band takes an equal ERB share of the remaining
    range, at least as many bins as the previous band, and never so many
    that the remaining bands could not keep up.
    """
    if not 1 <= num_bands <= num_bins:
        raise ValueError(f"need 1 <= num_bands <= num_bins, got {num_bands} bands for {num_bins} bins")
    hz_per_bin = sample_rate / 2 / max(num_bins - 1, 1)

    def erb_of_edge(b):
        # Band edges sit half a bin below the bin centre.
        return erb_rate(np.maximum(b - 0.5, 0.0) * hz_per_bin)

    def edge_of_erb(e):
        return (10 ** (e / 21.4) - 1.0) / 0.00437 / hz_per_bin + 0.5

    edges = [0]
    prev_width = 1
    top = erb_of_edge(num_bins)
    for k in range(num_bands - 1):
        start = edges[-1]
        remaining_bins = num_bins - start
        remaining_bands = num_bands - k
        ideal = edge_of_erb(erb_of_edge(start) + (top - erb_of_edge(start)) / remaining_bands) - start
        width = max(prev_width, int(round_half_away(ideal)), 1)
        width = min(width, remaining_bins // remaining_bands)
        edges.append(start + width)
        prev_width = width
    edges.append(num_bins)
    return np.asarray(edges, dtype=np.int64)


def band_pool(power, edges) -> np.ndarray:
    """Mean energy per band along the last axis."""
    power = np.asarray(power, dtype=float)
    edges = np.asarray(edges)
    if edges[-1] != power.shape[-1]:
        raise ValueError("band edges do not cover the bins")
    if power.shape[-1] == 0 or power.size == 0:
        return np.zeros(power.shape[:-1] + (len(edges) - 1,))
    sums = np.add.reduceat(power, edges[:-1], axis=-1)
    return sums / np.diff(edges)


def quantize_spectrogram(power, edges, u_cdb: int, T_cdb: int) -> tuple[np.ndarray, int]:
    """Band-pool and log-quantize one resolution of one source.

    Band energies are expressed in dB relative to the loudest band (the
    normalisation, rounded to centi-dB), bands below the threshold become
    :data:`SILENT`, and the rest are rounded to multiples of the step.

    Args:
        power: ``|S|**2`` with bins on the last axis.
        edges: band edges from :func:`band_edges`.
        u_cdb: step in centi-dB.
        T_cdb: threshold in centi-dB.

    Returns:
        ``(levels, norm_cdb)``; ``levels`` is an ``int32`` array with bands on
        the last axis.  A source without energy yields all-silent levels and
        ``norm_cdb == NORM_SILENT``.
    """
    if u_cdb < 1:
        raise ValueError("quantization step must be at least one centi-dB")
    bands = band_pool(power, edges)
    levels = np.full(bands.shape, SILENT, dtype=np.int32)
    peak = bands.max() if bands.size else 0.0
    if not peak > 0:
        return levels, NORM_SILENT
    norm_cdb = int(round_half_away(1000.0 * np.log10(peak)))
    with np.errstate(divide="ignore"):
        rel_db = 10.0 * np.log10(bands) - norm_cdb / 100.0
    keep = rel_db >= T_cdb / 100.0
    idx = np.minimum(round_half_away(rel_db[keep] / (u_cdb / 100.0)), 0)
    levels[keep] = idx.astype(np.int32)
    return levels, norm_cdb


def dequantize_spectrogram(levels, norm_cdb: int, edges, u_cdb: int) -> np.ndarray:
    """Per-bin energies from quantized band levels.

    Each band's energy is spread flat over its bins; silent bands and silent
    sources give zero.
    """
    levels = np.asarray(levels)
    widths = np.diff(np.asarray(edges))
    if norm_cdb == NORM_SILENT:
        energy = np.zeros(levels.shape, dtype=float)
    else:
        band_db = levels.astype(float) * (u_cdb / 100.0) + norm_cdb / 100.0
        energy = np.where(levels == SILENT, 0.0, 10.0 ** (band_db / 10.0))
    return np.repeat(energy, widths, axis=-1)


def encode_activity(activity, edges) -> np.ndarray:
    """A band is active when any of its bins is active."""
    activity = np.asarray(activity, dtype=bool)
    if activity.shape[-1] != np.asarray(edges)[-1]:
        raise ValueError("band edges do not cover the activity bins")
    if activity.size == 0:
        return np.zeros(activity.shape[:-1] + (len(edges) - 1,), dtype=bool)
    return np.logical_or.reduceat(activity, np.asarray(edges)[:-1], axis=-1)


def decode_activity(bits, edges) -> np.ndarray:
    """Expand band activity to every bin of the band."""
    return np.repeat(np.asarray(bits, dtype=bool), np.diff(np.asarray(edges)), axis=-1)
