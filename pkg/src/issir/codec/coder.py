"""Encoder with rate control, and the matching decoder."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..reconstruction import ReconParams, issir_reconstruct
from .bitstream import SideInfoBundle, deserialize, measure_rate, serialize
from .quantize import BAND_LADDER, MAX_THRESHOLD_DB, CodecConfig
from .sideinfo import analyze_sources, make_bundle

__all__ = ["RateResult", "RateUnreachable", "rate_control", "encode", "decode", "RATE_SLACK"]

log = logging.getLogger(__name__)

# A candidate is accepted once its rate is at most this multiple of the target.
RATE_SLACK = 1.1


class RateUnreachable(ValueError):
    """Even the coarsest settings exceed the target rate."""

    def __init__(self, target: float, best_rate: float):
        super().__init__(f"target {target:g} kb/source/s unreachable; best achieved {best_rate:.3f}")
        self.target = target
        self.best_rate = best_rate


@dataclass
class RateResult:
    bundle: SideInfoBundle
    stream: bytes
    rate: float


def _check_inputs(mix, stems):
    stems = [np.asarray(s, dtype=float) for s in stems]
    if not stems:
        raise ValueError("no sources")
    mix = np.asarray(mix, dtype=float)
    if any(s.shape != mix.shape for s in stems):
        raise ValueError("stems and mixture differ in length")
    return mix, stems


def rate_control(stems, mix, cfg: CodecConfig, sample_rate: float, analysis=None) -> RateResult:
    """Coarsen the side information until it fits ``cfg.target_rate``.

    The threshold ``T`` rises from ``cfg.T`` towards -20 dB in 1 dB steps;
    if no threshold fits, the large-window band count steps down the
    250/125/75 ladder and the threshold search restarts.  The first
    candidate whose rate is at most ``RATE_SLACK`` times the target wins.
    The rate is assumed non-increasing in ``T``, so the 1 dB grid is
    searched by bisection.

    Raises:
        RateUnreachable: carrying the lowest rate seen.
    """
    if cfg.target_rate is None or not cfg.target_rate > 0:
        raise ValueError("rate control needs a positive target rate")
    mix, stems = _check_inputs(mix, stems)
    if analysis is None:
        analysis = analyze_sources(stems, cfg, sample_rate)
    duration = len(mix) / sample_rate
    limit = RATE_SLACK * cfg.target_rate
    ladder = [cfg.bands_large] + [b for b in BAND_LADDER if b < cfg.bands_large]
    thresholds = np.arange(cfg.T, MAX_THRESHOLD_DB + 0.5, 1.0)
    thresholds = thresholds[thresholds <= MAX_THRESHOLD_DB]
    best = None

    for bands in ladder:
        cache = {}

        def attempt(i):
            if i not in cache:
                c = cfg.evolve(bands_large=bands, T=float(thresholds[i]))
                bundle = make_bundle(analysis, c)
                stream = serialize(bundle)
                cache[i] = RateResult(bundle, stream, measure_rate(stream, duration, len(stems)))
                log.debug("rate control: bands=%d T=%.0f -> %.3f kb/source/s",
                          bands, thresholds[i], cache[i].rate)
            return cache[i]

        lo, hi = 0, len(thresholds) - 1
        if attempt(lo).rate <= limit:
            return attempt(lo)
        last = attempt(hi)
        if best is None or last.rate < best.rate:
            best = last
        if last.rate > limit:
            continue
        # Invariant: attempt(lo) too large, attempt(hi) fits.
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if attempt(mid).rate <= limit:
                hi = mid
            else:
                lo = mid
        return attempt(hi)
    raise RateUnreachable(cfg.target_rate, best.rate)


def encode(mix, stems, cfg: CodecConfig, sample_rate: float) -> bytes:
    """Side-information bitstream for ``stems`` of the mixture ``mix``.

    Runs transient detection and dual-grid construction when ``cfg.dual`` is
    set, computes the source spectrograms, Wiener masks and activity
    domains, quantizes and packs them, and applies rate control when
    ``cfg.target_rate`` is given.
    """
    mix, stems = _check_inputs(mix, stems)
    analysis = analyze_sources(stems, cfg, sample_rate)
    if cfg.target_rate is not None:
        return rate_control(stems, mix, cfg, sample_rate, analysis=analysis).stream
    return serialize(make_bundle(analysis, cfg))


def decode(mix, stream: bytes, params: ReconParams = ReconParams()) -> list[np.ndarray]:
    """Source estimates from the mixture and a side-information bitstream."""
    bundle = deserialize(stream)
    mix = np.asarray(mix, dtype=float)
    if mix.size != bundle.length:
        raise ValueError(f"mixture has {mix.size} samples, side information describes {bundle.length}")
    return issir_reconstruct(mix, bundle, params)
