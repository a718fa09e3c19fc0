"""Building side-information bundles from sources, and reading them back."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..reconstruction import activity_masks, wiener_masks
from ..stft import DualGridSpec, GridSpec, stft
from ..transients import build_dual_grid, clean, combine, detect_transients
from .bitstream import SideInfoBundle, SourceBlock
from .quantize import (
    CodecConfig,
    band_edges,
    decode_activity,
    dequantize_spectrogram,
    encode_activity,
    quantize_spectrogram,
)

__all__ = [
    "SourceAnalysis",
    "analysis_grid",
    "analyze_sources",
    "make_bundle",
    "grid_from_bundle",
    "decoded_magnitudes",
    "decoded_activity",
]


def analysis_grid(stems, cfg: CodecConfig, sample_rate: float):
    """Uniform large-window grid, or the dual grid when ``cfg.dual`` is set.

    The dual grid is built from the per-source transient tracks, OR-ed
    together and thinned to the minimum spacing.
    """
    length = len(stems[0])
    large = GridSpec.for_signal(length, cfg.window_large, cfg.overlap, sample_rate)
    if not cfg.dual:
        return large
    small = large.with_window(cfg.window_small)
    tracks = [detect_transients(s, large, source_id=j) for j, s in enumerate(stems)]
    return build_dual_grid(clean(combine(tracks), large), large, small)


@dataclass
class SourceAnalysis:
    """Encoder-side spectra of all sources on one grid.

    ``powers`` and ``activity`` have shape ``(J,) + grid.shape``.
    """

    grid: GridSpec | DualGridSpec
    powers: np.ndarray
    activity: np.ndarray


def analyze_sources(stems, cfg: CodecConfig, sample_rate: float, grid=None) -> SourceAnalysis:
    stems = [np.asarray(s, dtype=float) for s in stems]
    if not stems:
        raise ValueError("no sources")
    if any(s.shape != stems[0].shape for s in stems):
        raise ValueError("stems differ in length")
    if grid is None:
        grid = analysis_grid(stems, cfg, sample_rate)
    powers = np.stack([np.abs(stft(s, grid)) ** 2 for s in stems])
    if len(stems) == 1:
        activity = np.ones(powers.shape, dtype=bool)
    else:
        activity = activity_masks(wiener_masks(powers), cfg.rho)
    return SourceAnalysis(grid, powers, activity)


def make_bundle(analysis: SourceAnalysis, cfg: CodecConfig) -> SideInfoBundle:
    """Quantize and pack ``analysis`` with the settings of ``cfg``."""
    grid = analysis.grid
    large = grid.large if isinstance(grid, DualGridSpec) else grid
    transients = grid.transient_frames if isinstance(grid, DualGridSpec) else ()
    overlap_code = large.window_length // large.hop
    per = (cfg.window_large - cfg.window_small) // (cfg.window_small // overlap_code) + 1
    edges_l = band_edges(cfg.bands_large, large.num_bins, large.sample_rate)
    edges_s = band_edges(cfg.bands_small, cfg.window_small // 2 + 1, large.sample_rate)
    empty_small = (len(transients), per, cfg.bands_small)

    sources = []
    for power, act in zip(analysis.powers, analysis.activity):
        if isinstance(grid, DualGridSpec):
            p_l, p_s = grid.split(power)
            a_l, a_s = grid.split(act)
        else:
            p_l, a_l = power, act
            p_s = np.zeros(empty_small[:2] + (cfg.window_small // 2 + 1,))
            a_s = np.zeros_like(p_s, dtype=bool)
        lev_l, norm_l = quantize_spectrogram(p_l, edges_l, cfg.u_cdb, cfg.T_cdb)
        lev_s, norm_s = quantize_spectrogram(p_s, edges_s, cfg.u_cdb, cfg.T_cdb)
        sources.append(SourceBlock(
            norm_large_cdb=norm_l,
            norm_small_cdb=norm_s,
            levels_large=lev_l,
            levels_small=lev_s.reshape(empty_small),
            active_large=encode_activity(a_l, edges_l),
            active_small=encode_activity(a_s, edges_s).reshape(empty_small),
        ))
    return SideInfoBundle(
        sample_rate=int(round(large.sample_rate)),
        length=large.length,
        window_large=cfg.window_large,
        window_small=cfg.window_small,
        overlap_code=overlap_code,
        u_cdb=cfg.u_cdb,
        rho_ppm=cfg.rho_ppm,
        T_cdb=cfg.T_cdb,
        bands_large=cfg.bands_large,
        bands_small=cfg.bands_small,
        transients=tuple(transients),
        sources=sources,
        dual=cfg.dual,
        backend=cfg.backend,
    )


def grid_from_bundle(bundle: SideInfoBundle):
    large = GridSpec(bundle.window_large, bundle.window_large // bundle.overlap_code,
                     bundle.length, float(bundle.sample_rate))
    if not bundle.transients:
        return large
    return DualGridSpec(large, large.with_window(bundle.window_small), tuple(bundle.transients))


def _edges(bundle: SideInfoBundle):
    return (band_edges(bundle.bands_large, bundle.window_large // 2 + 1, bundle.sample_rate),
            band_edges(bundle.bands_small, bundle.window_small // 2 + 1, bundle.sample_rate))


def decoded_magnitudes(bundle: SideInfoBundle, grid=None) -> np.ndarray:
    """Dequantized magnitudes ``sqrt(energy)`` laid out on the bundle's grid."""
    grid = grid_from_bundle(bundle) if grid is None else grid
    edges_l, edges_s = _edges(bundle)
    out = []
    for src in bundle.sources:
        e_l = dequantize_spectrogram(src.levels_large, src.norm_large_cdb, edges_l, bundle.u_cdb)
        if isinstance(grid, DualGridSpec):
            e_s = dequantize_spectrogram(src.levels_small, src.norm_small_cdb, edges_s, bundle.u_cdb)
            out.append(np.sqrt(grid.join(e_l, e_s)))
        else:
            out.append(np.sqrt(e_l))
    return np.stack(out)


def decoded_activity(bundle: SideInfoBundle, grid=None) -> np.ndarray:
    """Bin-level activity domain expanded from the band bits."""
    grid = grid_from_bundle(bundle) if grid is None else grid
    edges_l, edges_s = _edges(bundle)
    out = []
    for src in bundle.sources:
        a_l = decode_activity(src.active_large, edges_l)
        if isinstance(grid, DualGridSpec):
            out.append(grid.join(a_l, decode_activity(src.active_small, edges_s)))
        else:
            out.append(a_l)
    return np.stack(out)
