import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from issir.metrics import (
    SCORE_CAP_DB,
    ReferenceSet,
    SeparationScores,
    bss_eval,
    decompose,
    relative_scores,
    scores,
)


def orthogonal_to(v, rng):
    w = rng.standard_normal(v.size)
    return w - v * (w @ v) / (v @ v)


def dense_decomposition(est, refs, j, L):
    """Oracle: least squares against an explicit matrix of delayed copies."""
    J, T = refs.shape
    n = T + L - 1
    cols = np.zeros((n, J * L))
    for i in range(J):
        for d in range(L):
            cols[d:d + T, i * L + d] = refs[i]
    padded = np.concatenate([est, np.zeros(L - 1)])
    own = cols[:, j * L:(j + 1) * L]
    target = own @ np.linalg.lstsq(own, padded, rcond=None)[0]
    p_all = cols @ np.linalg.lstsq(cols, padded, rcond=None)[0]
    return target, p_all - target, padded - p_all


# ---------------------------------------------------------------- closed forms

def test_scaled_reference_scores_capped(rng):
    refs = rng.standard_normal((2, 3000))
    res = bss_eval(0.3 * refs, refs, filter_length=16)
    assert np.all(res.sdr >= SCORE_CAP_DB - 1e-6)
    assert np.all(res.sir >= SCORE_CAP_DB - 1e-6)


def test_orthogonal_artifact_single_tap(rng):
    s = rng.standard_normal(4000)
    b = orthogonal_to(s, rng)
    b *= np.linalg.norm(s) / np.linalg.norm(b) / 10  # energy ratio 100
    res = bss_eval([s + b], [s], filter_length=1)
    assert res.sdr[0] == pytest.approx(20.0, abs=1e-9)
    assert res.sar[0] == pytest.approx(20.0, abs=1e-9)
    assert res.sir[0] == SCORE_CAP_DB


def test_orthogonal_interference_single_tap(rng):
    s = rng.standard_normal(4000)
    other = orthogonal_to(s, rng)
    est = s + 0.1 * other * np.linalg.norm(s) / np.linalg.norm(other)
    res = bss_eval([est, other], [s, other], filter_length=1)
    assert res.sir[0] == pytest.approx(20.0, abs=1e-9)
    assert res.sdr[0] == pytest.approx(20.0, abs=1e-9)
    assert res.sar[0] == SCORE_CAP_DB


def test_delayed_reference_is_target(rng):
    s = rng.standard_normal(3000)
    s[-5:] = 0.0  # so the delayed copy fits inside the clip
    est = np.concatenate([np.zeros(5), s[:-5]])
    d = decompose(est, [s], 0, filter_length=16)
    assert np.linalg.norm(d.artifacts) < 1e-8 * np.linalg.norm(est)


# ---------------------------------------------------------------- oracle

def test_matches_dense_least_squares(rng):
    refs = rng.standard_normal((3, 1200))
    est = refs[0] + 0.3 * refs[1] + 0.1 * rng.standard_normal(1200)
    L = 512
    d = decompose(est, refs, 0, filter_length=L)
    for part, ref in zip((d.target, d.interference, d.artifacts), dense_decomposition(est, refs, 0, L)):
        assert np.linalg.norm(part - ref) <= 1e-6 * np.linalg.norm(est)


# ---------------------------------------------------------------- invariants

@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 32))
@settings(max_examples=30, deadline=None)
def test_parts_add_up_and_are_orthogonal(seed, L):
    rng = np.random.default_rng(seed)
    refs = rng.standard_normal((2, 600))
    est = rng.standard_normal(600)
    d = decompose(est, refs, 1, filter_length=L)
    padded = np.concatenate([est, np.zeros(L - 1)])
    scale = padded @ padded
    assert np.allclose(d.target + d.interference + d.artifacts, padded, atol=1e-10)
    assert abs(d.target @ d.artifacts) < 1e-8 * scale
    assert abs(d.interference @ d.artifacts) < 1e-8 * scale


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100.0))
@settings(max_examples=30, deadline=None)
def test_scale_invariance(seed, gain):
    rng = np.random.default_rng(seed)
    refs = rng.standard_normal((2, 800))
    est = refs + 0.5 * rng.standard_normal((2, 800))
    a = bss_eval(est, refs, filter_length=8)
    b = bss_eval(gain * est, refs, filter_length=8)
    for k in ("sdr", "sir", "sar"):
        assert np.allclose(a.as_dict()[k], b.as_dict()[k], atol=1e-6)


def test_reference_set_reuse(rng):
    refs = rng.standard_normal((2, 1000))
    est = refs + 0.2 * rng.standard_normal((2, 1000))
    rs = ReferenceSet(refs, 32)
    a, b = bss_eval(est, refs, 32), bss_eval(est, None, reference_set=rs)
    assert np.array_equal(a.sdr, b.sdr)


# ---------------------------------------------------------------- degenerate cases

def test_silent_estimate_is_undefined(rng):
    refs = rng.standard_normal((2, 500))
    res = bss_eval(np.stack([np.zeros(500), refs[1]]), refs, filter_length=4)
    assert np.isnan(res.sdr[0]) and res.flags[0] == "undefined"
    assert not np.isnan(res.sdr[1])


def test_silent_reference_is_undefined(rng):
    refs = np.stack([np.zeros(500), rng.standard_normal(500)])
    res = bss_eval(rng.standard_normal((2, 500)), refs, filter_length=4)
    assert np.isnan(res.sar[0])


def test_validation(rng):
    refs = rng.standard_normal((2, 100))
    with pytest.raises(ValueError):
        decompose(np.ones(99), refs, 0)
    with pytest.raises(ValueError):
        decompose(np.ones(100), refs, 2)
    with pytest.raises(ValueError):
        ReferenceSet(refs, 0)
    with pytest.raises(ValueError):
        bss_eval(np.ones((1, 100)), refs)


# ---------------------------------------------------------------- aggregation

def test_relative_scores():
    a = SeparationScores([10.0, 5.0], [20.0, 8.0], [12.0, 6.0])
    b = SeparationScores([7.0, 6.0], [15.0, 8.0], [12.0, 9.0])
    rel = relative_scores(a, b, name="wiener")
    assert rel.sdr.tolist() == [3.0, -1.0] and rel.baseline == "wiener"
    assert not np.any(relative_scores(a, a).sir)
    assert np.array_equal(relative_scores(b, a).sar, -rel.sar)
    with pytest.raises(ValueError):
        relative_scores(a, SeparationScores([1.0], [1.0], [1.0]))


def test_mean_ignores_undefined():
    s = SeparationScores([10.0, np.nan, 20.0], [1.0, np.nan, 3.0], [0.0, np.nan, 0.0])
    assert s.mean()["sdr"] == pytest.approx(15.0)
    assert s.std()["sir"] == pytest.approx(1.0)


def test_scores_of_single_decomposition(rng):
    s = rng.standard_normal(300)
    assert len(scores(decompose(s, [s], 0, filter_length=2))) == 1
