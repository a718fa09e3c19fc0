"""Separation methods wired end to end, for evaluation and parameter sweeps.

Two families of runs exist.  *Codec* runs go through the full encoder and
decoder (band grouping, thresholding, bitstream).  *Bin-level* runs skip
the bitstream and feed per-bin quantized magnitudes straight to the
reconstruction, with ``u = 0`` meaning exact magnitudes; they reproduce the
preliminary single-file experiments where no band grouping is applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import (
    CodecConfig,
    decode,
    decoded_magnitudes,
    deserialize,
    encode,
    grid_from_bundle,
    measure_rate,
)
from .codec.quantize import dequantize_spectrogram, quantize_spectrogram
from .reconstruction import (
    ReconParams,
    activity_masks,
    issir_iterate,
    misi,
    wiener_masks,
    wiener_separate,
)
from .stft import GridSpec, istft, stft

__all__ = [
    "MethodResult",
    "METHODS",
    "oracle_wiener",
    "binlevel_magnitudes",
    "misi_binlevel",
    "issir_binlevel",
    "codec_roundtrip",
    "decoder_wiener",
    "run_method",
]

METHODS = ("wiener_oracle", "misi", "issir_single", "issir_dual")

# Threshold used for bin-level quantization: low enough to keep every bin
# of the synthetic fixtures.
BINLEVEL_T_CDB = -20000


@dataclass
class MethodResult:
    estimates: list[np.ndarray]
    rate: float = float("nan")
    info: dict = field(default_factory=dict)


def oracle_wiener(mix, stems, grid) -> list[np.ndarray]:
    """Wiener filtering with masks from the true source spectrograms."""
    M = stft(mix, grid)
    masks = wiener_masks([np.abs(stft(s, grid)) ** 2 for s in stems])
    return wiener_separate(M, masks, grid)


def binlevel_magnitudes(stems, grid: GridSpec, u: float) -> np.ndarray:
    """Per-bin magnitudes log-quantized with step ``u`` dB (exact when ``u == 0``)."""
    mags = np.stack([np.abs(stft(s, grid)) for s in stems])
    if u == 0:
        return mags
    u_cdb = int(round(u * 100))
    edges = np.arange(grid.num_bins + 1)
    out = []
    for m in mags:
        levels, norm = quantize_spectrogram(m ** 2, edges, u_cdb, BINLEVEL_T_CDB)
        out.append(np.sqrt(dequantize_spectrogram(levels, norm, edges, u_cdb)))
    return np.stack(out)


def misi_binlevel(mix, stems, grid, u: float = 0.0, n_iter: int = 50) -> list[np.ndarray]:
    M = stft(mix, grid)
    est = misi(M, binlevel_magnitudes(stems, grid, u), n_iter, grid)
    return [istft(e, grid) for e in est]


def issir_binlevel(mix, stems, grid, u: float, params: ReconParams) -> list[np.ndarray]:
    """ISSIR from per-bin quantized magnitudes and the true activity domain."""
    M = stft(mix, grid)
    mags = binlevel_magnitudes(stems, grid, u)
    powers = [np.abs(stft(s, grid)) ** 2 for s in stems]
    psi = activity_masks(wiener_masks(powers), params.rho)
    if params.mode == "M3":
        psi = np.ones_like(psi)
    phase = np.exp(1j * np.angle(M))
    init = [p * m * phase for p, m in zip(psi, mags)]
    est = issir_iterate(M, init, psi, params, grid)
    return [istft(p * e, grid) for p, e in zip(psi, est)]


def codec_roundtrip(mix, stems, cfg: CodecConfig, params: ReconParams, sample_rate: float) -> MethodResult:
    """Encode, measure the rate, and decode with ISSIR."""
    stream = encode(mix, stems, cfg, sample_rate)
    bundle = deserialize(stream)
    rate = measure_rate(stream, len(mix) / sample_rate, len(stems))
    info = {"T_db": bundle.T_cdb / 100, "bands_large": bundle.bands_large,
            "transients": len(bundle.transients), "bytes": len(stream)}
    return MethodResult(decode(mix, stream, params), rate, info)


def decoder_wiener(mix, stream: bytes) -> list[np.ndarray]:
    """Wiener filtering with masks built from the decoded (quantized) magnitudes."""
    bundle = deserialize(stream)
    grid = grid_from_bundle(bundle)
    M = stft(mix, grid)
    mags = decoded_magnitudes(bundle, grid)
    return wiener_separate(M, wiener_masks(mags ** 2), grid)


def run_method(name: str, mix, stems, sample_rate: float, cfg: CodecConfig = CodecConfig(),
               params: ReconParams = ReconParams()) -> MethodResult:
    """Run one of :data:`METHODS` on a multitrack.

    ``misi`` uses the decoded magnitudes of a single-resolution codec run
    (MISI with quantized, coded spectrograms); the oracle Wiener filter uses
    the large single-resolution grid of ``cfg``.
    """
    grid = GridSpec.for_signal(len(mix), cfg.window_large, cfg.overlap, sample_rate)
    if name == "wiener_oracle":
        return MethodResult(oracle_wiener(mix, stems, grid))
    if name == "misi":
        stream = encode(mix, stems, cfg.evolve(dual=False), sample_rate)
        bundle = deserialize(stream)
        M = stft(mix, grid)
        est = misi(M, decoded_magnitudes(bundle, grid), max(params.n_iter, 1), grid)
        return MethodResult([istft(e, grid) for e in est],
                            measure_rate(stream, len(mix) / sample_rate, len(stems)))
    if name == "issir_single":
        return codec_roundtrip(mix, stems, cfg.evolve(dual=False), params, sample_rate)
    if name == "issir_dual":
        return codec_roundtrip(mix, stems, cfg.evolve(dual=True), params, sample_rate)
    raise ValueError(f"unknown method {name!r}; expected one of {METHODS}")
