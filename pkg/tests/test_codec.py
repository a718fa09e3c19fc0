import numpy as np
import pytest

from issir.codec import (
    CodecConfig,
    RateUnreachable,
    analyze_sources,
    decode,
    decoded_activity,
    decoded_magnitudes,
    deserialize,
    encode,
    grid_from_bundle,
    measure_rate,
    rate_control,
)
from issir.codec.coder import RATE_SLACK
from issir.experiments import decoder_wiener, oracle_wiener
from issir.metrics import bss_eval
from issir.reconstruction import ReconParams
from issir.stft import DualGridSpec, GridSpec, istft, stft

SR = 44100


def rate_of(stream, fx):
    return measure_rate(stream, fx.duration, len(fx.stems))


# ---------------------------------------------------------------- encoder

def test_encode_decode_round_trip(two5):
    stream = encode(two5.mix, two5.stems, CodecConfig(), SR)
    bundle = deserialize(stream)
    assert bundle.length == two5.length and len(bundle.sources) == 2
    assert not bundle.dual and bundle.transients == ()
    est = decode(two5.mix, stream)
    assert len(est) == 2 and all(e.shape == two5.mix.shape for e in est)
    assert np.all(bss_eval(est, two5.stems).sdr > 10)


def test_encode_is_deterministic(two5):
    cfg = CodecConfig(target_rate=8.0)
    assert encode(two5.mix, two5.stems, cfg, SR) == encode(two5.mix, two5.stems, cfg, SR)


def test_encode_input_checks(two5):
    with pytest.raises(ValueError):
        encode(two5.mix, [], CodecConfig(), SR)
    with pytest.raises(ValueError):
        encode(two5.mix, [two5.stems[0][:-1]], CodecConfig(), SR)


def test_decode_length_mismatch(two5):
    stream = encode(two5.mix, two5.stems, CodecConfig(), SR)
    with pytest.raises(ValueError, match="samples"):
        decode(two5.mix[:-10], stream)


def test_decoded_activity_covers_encoder_activity(band5):
    cfg = CodecConfig(bands_large=75)
    analysis = analyze_sources(band5.stems, cfg, SR)
    bundle = deserialize(encode(band5.mix, band5.stems, cfg, SR))
    assert np.all(decoded_activity(bundle) >= analysis.activity)


def test_dual_bundle_layout(transient10):
    cfg = CodecConfig(dual=True)
    bundle = deserialize(encode(transient10.mix, transient10.stems, cfg, SR))
    grid = grid_from_bundle(bundle)
    assert isinstance(grid, DualGridSpec) and bundle.dual
    assert len(bundle.transients) > 0
    mags = decoded_magnitudes(bundle, grid)
    assert mags.shape == (len(transient10.stems),) + grid.shape


# ---------------------------------------------------------------- rate control

def test_generous_target_takes_first_candidate(band5):
    res = rate_control(band5.stems, band5.mix, CodecConfig(target_rate=1000.0), SR)
    assert res.bundle.T_cdb == -12000 and res.bundle.bands_large == 250


def test_target_is_met_within_slack(band5):
    res = rate_control(band5.stems, band5.mix, CodecConfig(target_rate=10.0), SR)
    assert 8.0 <= res.rate <= 10.0 * RATE_SLACK
    assert res.rate == rate_of(res.stream, band5)


def test_rate_is_monotone_in_target(band5):
    rates = [rate_control(band5.stems, band5.mix, CodecConfig(target_rate=t), SR).rate
             for t in (4.0, 10.0, 20.0)]
    assert rates == sorted(rates)


def test_unreachable_target(band5):
    with pytest.raises(RateUnreachable) as info:
        rate_control(band5.stems, band5.mix, CodecConfig(target_rate=0.01), SR)
    assert info.value.best_rate > 0.01 * RATE_SLACK


def test_rate_control_needs_target(band5):
    with pytest.raises(ValueError):
        rate_control(band5.stems, band5.mix, CodecConfig(), SR)


# ---------------------------------------------------------------- degenerate settings

# Per-bin bands with a 0.01 dB step.
FINE = CodecConfig(u=0.01, T=-120.0, bands_large=1025, window_large=2048)


def test_fine_decoder_wiener_matches_oracle(two5):
    stream = encode(two5.mix, two5.stems, FINE, SR)
    grid = GridSpec.for_signal(two5.length, 2048, 0.5, SR)
    oracle = oracle_wiener(two5.mix, two5.stems, grid)
    coded = decoder_wiener(two5.mix, stream)
    for o, c in zip(oracle, coded):
        assert np.linalg.norm(o - c) / np.linalg.norm(o) < 1e-3


def test_zero_iterations_give_magnitudes_with_mixture_phase(two5):
    stream = encode(two5.mix, two5.stems, FINE, SR)
    est = decode(two5.mix, stream, ReconParams(mode="M3", n_iter=0))
    grid = GridSpec.for_signal(two5.length, 2048, 0.5, SR)
    M = stft(two5.mix, grid)
    phase = np.exp(1j * np.angle(M))
    for s, e in zip(two5.stems, est):
        ref = istft(np.abs(stft(s, grid)) * phase, grid)
        assert np.linalg.norm(ref - e) / np.linalg.norm(ref) < 1e-3
