import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from issir.fixtures import click_train
from issir.stft import GridSpec, istft, stft
from issir.transients import (
    SpacingError,
    TransientTrack,
    build_dual_grid,
    clean,
    combine,
    complex_spectral_difference,
    detect_transients,
)

SR = 44100


def large_grid(n, overlap=0.5):
    return GridSpec.for_signal(n, 2048, overlap, SR)


def click_positions(count=10, spacing=SR // 4, offset=SR // 8):
    return offset + spacing * np.arange(count)


def frames_of(positions, grid):
    """Large frame whose centre lies closest to each sample position."""
    centres = grid.frame_time(np.arange(grid.num_frames))
    return np.array([int(np.argmin(np.abs(centres - p))) for p in positions])


flags_strategy = st.lists(st.booleans(), min_size=1, max_size=200)


# ---------------------------------------------------------------- track type

def test_track_rejects_non_binary():
    with pytest.raises(ValueError):
        TransientTrack(np.array([0, 2, 1]))


def test_track_frames():
    t = TransientTrack.from_frames([2, 5], 8)
    assert t.frames.tolist() == [2, 5]
    assert len(t) == 8


# ---------------------------------------------------------------- detection

def test_csd_is_zero_for_stationary_phase_advance():
    # A bin-centred tone advances its phase by a constant per frame, which
    # the linear extrapolation predicts exactly.
    grid = GridSpec.for_signal(SR, 1024, 0.5, SR)
    x = np.cos(2 * np.pi * (40 * SR / 1024) * np.arange(SR) / SR)
    csd, scale = complex_spectral_difference(stft(x, grid), rectify=False)
    interior = grid.interior_frames()[2:]
    assert np.all(csd[interior] < 1e-9 * scale[interior])


def test_sinusoid_has_no_transients():
    x = np.sin(2 * np.pi * 440 * np.arange(3 * SR) / SR)
    assert not detect_transients(x, large_grid(x.size)).frames.size


def test_silence_has_no_transients():
    x = np.zeros(2 * SR)
    assert not detect_transients(x, large_grid(x.size)).frames.size


def test_too_short_rejected():
    with pytest.raises(ValueError):
        detect_transients(np.ones(3000), large_grid(3000))


@pytest.mark.parametrize("overlap", [0.5, 0.75])
def test_click_train_gives_one_flag_per_click(overlap):
    pos = click_positions()
    x = click_train(3 * SR, pos)
    grid = large_grid(x.size, overlap)
    found = detect_transients(x, grid).frames
    assert found.size == 10
    assert np.all(np.abs(found - frames_of(pos, grid)) <= 1)


def test_clicks_over_tonal_background():
    pos = click_positions()
    t = np.arange(3 * SR) / SR
    # Sustained from the first sample, so it has no onset of its own.
    chord = sum(np.sin(2 * np.pi * k * 220.0 * t + k) / k for k in range(1, 9))
    x = click_train(3 * SR, pos) + 0.3 * chord
    grid = large_grid(x.size)
    found = detect_transients(x, grid).frames
    assert found.size == 10
    assert np.all(np.abs(found - frames_of(pos, grid)) <= 1)


# ---------------------------------------------------------------- combine

def test_combine_examples():
    a = TransientTrack(np.array([1, 0, 0]))
    b = TransientTrack(np.array([0, 0, 1]))
    assert combine([a, b]).flags.tolist() == [True, False, True]
    z = TransientTrack(np.zeros(3))
    assert not combine([z, z]).flags.any()


def test_combine_length_mismatch():
    with pytest.raises(ValueError):
        combine([TransientTrack(np.zeros(3)), TransientTrack(np.zeros(4))])


@given(st.data())
@settings(max_examples=60, deadline=None)
def test_combine_algebra(data):
    n = data.draw(st.integers(1, 50))
    a, b, c = (TransientTrack(np.array(data.draw(st.lists(st.booleans(), min_size=n, max_size=n))))
               for _ in range(3))
    assert combine([a, a]) == a
    assert combine([a, b]) == combine([b, a])
    assert combine([combine([a, b]), c]) == combine([a, combine([b, c])])


# ---------------------------------------------------------------- clean

def test_clean_examples():
    grid = large_grid(SR)  # hop 1024
    t = TransientTrack.from_frames([3, 4], grid.num_frames)  # offsets 0 and 1024 apart
    assert clean(t, grid).frames.tolist() == [3]
    t = TransientTrack.from_frames([3, 7], grid.num_frames)  # 4096 apart
    assert clean(t, grid).frames.tolist() == [3, 7]
    t = TransientTrack.from_frames([9], grid.num_frames)
    assert clean(t, grid) == t


@given(flags_strategy, st.sampled_from([0.5, 0.75]))
@settings(max_examples=100, deadline=None)
def test_clean_spacing_and_idempotence(flags, overlap):
    grid = GridSpec.for_signal(10 * SR, 2048, overlap, SR)
    flags = np.array(flags + [False] * (grid.num_frames - len(flags)))[:grid.num_frames]
    once = clean(TransientTrack(flags), grid)
    assert np.all(np.diff(once.frames) * grid.hop >= 2 * grid.window_length)
    assert clean(once, grid) == once
    assert np.all(once.flags <= flags)
    if flags.any():
        assert once.frames[0] == np.flatnonzero(flags)[0]


# ---------------------------------------------------------------- dual grid

def test_build_dual_grid_examples():
    large = large_grid(SR)
    small = large.with_window(256)
    empty = build_dual_grid(TransientTrack(np.zeros(large.num_frames)), large, small)
    assert empty.transient_frames == ()
    one = build_dual_grid(TransientTrack.from_frames([7], large.num_frames), large, small)
    starts = one.small_starts()[0]
    assert starts.size == 15
    assert (starts[0], starts[-1] + 256) == (7 * 1024, 7 * 1024 + 2048)


def test_build_dual_grid_rejects_uncleaned():
    large = large_grid(SR)
    t = TransientTrack.from_frames([3, 4], large.num_frames)
    with pytest.raises(SpacingError, match="spacing violation"):
        build_dual_grid(t, large, large.with_window(256))


def test_dual_grid_from_clicks_reconstructs():
    x = click_train(2 * SR, click_positions(6))
    large = large_grid(x.size)
    dual = build_dual_grid(clean(detect_transients(x, large), large), large, large.with_window(256))
    assert len(dual.transient_frames) == 6
    y = istft(stft(x, dual), dual)
    assert np.linalg.norm(y - x) / np.linalg.norm(x) < 1e-10
