import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from issir.codec.quantize import (
    NORM_SILENT,
    SILENT,
    CodecConfig,
    band_edges,
    band_pool,
    decode_activity,
    dequantize_spectrogram,
    encode_activity,
    erb_rate,
    quantize_spectrogram,
    round_half_away,
)

DATA = Path(__file__).parent / "data"


def db(x):
    return 10 * np.log10(x)


# ---------------------------------------------------------------- config

def test_config_defaults():
    cfg = CodecConfig()
    assert (cfg.u, cfg.rho, cfg.bands_large, cfg.bands_small) == (1.0, 0.01, 250, 25)
    assert (cfg.u_cdb, cfg.rho_ppm) == (100, 10000)


@pytest.mark.parametrize("kw", [{"T": -19.0}, {"u": 0.0}, {"bands_large": 2000}, {"bands_small": 0},
                                {"overlap": 0.6}, {"target_rate": 0.0}, {"rho": 1.5}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        CodecConfig(**kw)


def test_round_half_away():
    assert round_half_away([0.5, 1.5, -0.5, -2.5, 2.4]).tolist() == [1, 2, -1, -3, 2]


# ---------------------------------------------------------------- band edges

def test_edges_single_bin_bands():
    assert np.array_equal(band_edges(129, 129), np.arange(130))


def test_edges_one_band():
    assert band_edges(1, 129).tolist() == [0, 129]


def test_edges_too_many_bands():
    with pytest.raises(ValueError):
        band_edges(130, 129)


def test_edges_golden_25_129():
    golden = json.loads((DATA / "band_edges_25_129.json").read_text())
    edges = band_edges(golden["num_bands"], golden["num_bins"], golden["sample_rate"])
    assert edges.tolist() == golden["edges"]
    widths = np.diff(edges)
    assert widths[0] == 1 and widths[-1] == widths.max()


@given(st.integers(1, 1025), st.data())
@settings(max_examples=150, deadline=None)
def test_edges_partition_with_growing_widths(num_bins, data):
    num_bands = data.draw(st.integers(1, num_bins))
    edges = band_edges(num_bands, num_bins)
    widths = np.diff(edges)
    assert edges[0] == 0 and edges[-1] == num_bins
    assert edges.size == num_bands + 1
    assert np.all(widths >= 1)
    assert np.all(np.diff(widths) >= 0)


def test_edges_follow_erb_scale():
    # Upper bands of a 250-band split of 1025 bins each cover a similar ERB span.
    edges = band_edges(250, 1025)
    hz = (edges - 0.5).clip(0) * 22050 / 1024
    span = np.diff(erb_rate(hz))[100:]
    assert span.max() / span.min() < 1.6


# ---------------------------------------------------------------- pooling

def test_band_pool_mean_energy():
    power = np.array([[1.0, 3.0, 2.0, 2.0, 8.0]])
    assert band_pool(power, [0, 2, 5]).tolist() == [[2.0, 4.0]]


# ---------------------------------------------------------------- quantizer

def single_bins(n):
    return np.arange(n + 1)


def test_quantize_examples():
    power = np.array([[1.0, 10 ** -0.39, 10 ** -2.5]])
    levels, norm = quantize_spectrogram(power, single_bins(3), 200, -2000)
    assert norm == 0
    assert levels[0, 0] == 0
    assert levels[0, 1] == -2
    assert levels[0, 2] == SILENT
    energy = dequantize_spectrogram(levels, norm, single_bins(3), 200)
    assert db(energy[0, 1]) == pytest.approx(-4.0)
    assert energy[0, 2] == 0.0


def test_all_silent_source():
    levels, norm = quantize_spectrogram(np.zeros((4, 6)), [0, 3, 6], 100, -8000)
    assert norm == NORM_SILENT
    assert np.all(levels == SILENT)
    assert not np.any(dequantize_spectrogram(levels, norm, [0, 3, 6], 100))


def test_norm_is_loudest_band():
    power = np.array([[4.0, 4.0, 0.25], [1.0, 1.0, 1.0]])
    levels, norm = quantize_spectrogram(power, [0, 2, 3], 100, -8000)
    assert norm == round(1000 * np.log10(4.0))
    assert levels.max() == 0


def test_dequantize_spreads_band_energy_flat():
    levels = np.array([[0, -3]], dtype=np.int32)
    energy = dequantize_spectrogram(levels, 0, [0, 2, 5], 100)
    assert np.allclose(energy[0, :2], 1.0)
    assert np.allclose(energy[0, 2:], 10 ** -0.3)


@given(hnp.arrays(float, (6, 40), elements=st.floats(1e-12, 1e3)), st.sampled_from([1.0, 2.0, 4.0]),
       st.integers(1, 40))
@settings(max_examples=100, deadline=None)
def test_quantizer_error_bound(power, u, num_bands):
    edges = band_edges(num_bands, 40)
    u_cdb = int(u * 100)
    levels, norm = quantize_spectrogram(power, edges, u_cdb, -12000)
    bands = band_pool(power, edges)
    kept = levels != SILENT
    deq = band_pool(dequantize_spectrogram(levels, norm, edges, u_cdb), edges)
    # The normalisation's own rounding cancels out, leaving only the step.
    assert np.all(np.abs(db(deq[kept]) - db(bands[kept])) <= u / 2 + 1e-9)


def test_small_step_single_bin_is_near_identity(rng):
    power = rng.uniform(0.1, 1.0, (5, 30))
    levels, norm = quantize_spectrogram(power, single_bins(30), 1, -12000)
    energy = dequantize_spectrogram(levels, norm, single_bins(30), 1)
    assert np.max(np.abs(db(energy) - db(power))) <= 0.01


def test_threshold_is_relative_to_peak():
    power = np.array([[1.0, 10 ** -1.99, 10 ** -2.01]])
    levels, _ = quantize_spectrogram(power, single_bins(3), 100, -2000)
    assert levels[0, 1] != SILENT and levels[0, 2] == SILENT


# ---------------------------------------------------------------- activity

def test_activity_all_zero():
    assert not encode_activity(np.zeros((3, 10), bool), [0, 4, 10]).any()


def test_one_active_bin_activates_band():
    act = np.zeros((1, 10), bool)
    act[0, 6] = True
    bits = encode_activity(act, [0, 4, 10])
    assert bits.tolist() == [[False, True]]
    assert decode_activity(bits, [0, 4, 10])[0].tolist() == [False] * 4 + [True] * 6


@given(hnp.arrays(bool, (5, 64)), st.integers(1, 64))
@settings(max_examples=100, deadline=None)
def test_decoded_activity_is_superset(act, num_bands):
    edges = band_edges(num_bands, 64)
    decoded = decode_activity(encode_activity(act, edges), edges)
    assert np.all(decoded >= act)
