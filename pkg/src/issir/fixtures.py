"""Seeded synthetic multitrack fixtures.

The stems imitate a small band (bass, drums, percussion, keys, lead) with
notes that overlap in time and frequency, so that Wiener masking is not
trivially exact.  Every generator is deterministic for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfilt

__all__ = [
    "Multitrack",
    "harmonic_note",
    "click_train",
    "filtered_noise",
    "chirp",
    "band_fixture",
    "two_source_fixture",
    "transient_fixture",
    "music_like",
]

SR = 44100


@dataclass
class Multitrack:
    stems: list[np.ndarray]
    sample_rate: int
    names: list[str]

    @property
    def mix(self) -> np.ndarray:
        return np.sum(self.stems, axis=0)

    @property
    def length(self) -> int:
        return self.stems[0].size

    @property
    def duration(self) -> float:
        return self.length / self.sample_rate


def _envelope(n: int, sr: int, attack: float, decay: float) -> np.ndarray:
    t = np.arange(n) / sr
    env = np.exp(-t / decay)
    na = max(1, int(attack * sr))
    env[:na] *= np.linspace(0.0, 1.0, na)
    return env


def harmonic_note(f0: float, dur: float, sr: int = SR, n_harm: int = 8, tilt: float = 1.0,
                  attack: float = 0.01, decay: float = 0.4, vibrato: float = 0.0,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Decaying harmonic tone; harmonic ``k`` has amplitude ``k ** -tilt``."""
    rng = np.random.default_rng() if rng is None else rng
    n = int(dur * sr)
    t = np.arange(n) / sr
    inst = f0 * (1.0 + vibrato * np.sin(2 * np.pi * 5.5 * t))
    phase = 2 * np.pi * np.cumsum(inst) / sr
    out = np.zeros(n)
    for k in range(1, n_harm + 1):
        if k * f0 >= sr / 2 * 0.9:
            break
        out += k ** -tilt * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    return out * _envelope(n, sr, attack, decay)


def filtered_noise(n: int, lo: float, hi: float, sr: int = SR, rng=None, order: int = 4) -> np.ndarray:
    rng = np.random.default_rng() if rng is None else rng
    sos = butter(order, [lo, hi], btype="bandpass", fs=sr, output="sos")
    return sosfilt(sos, rng.standard_normal(n))


def chirp(dur: float, f_start: float, f_end: float, sr: int = SR) -> np.ndarray:
    t = np.arange(int(dur * sr)) / sr
    k = (f_end - f_start) / dur
    return np.sin(2 * np.pi * (f_start * t + 0.5 * k * t ** 2))


def click_train(n: int, positions, amplitude: float = 1.0) -> np.ndarray:
    x = np.zeros(n)
    x[np.asarray(positions, dtype=int)] = amplitude
    return x


def _place(buf: np.ndarray, sig: np.ndarray, start: int):
    end = min(buf.size, start + sig.size)
    if start < end:
        buf[start:end] += sig[:end - start]


def _normalize(x: np.ndarray, rms: float) -> np.ndarray:
    cur = np.sqrt(np.mean(x ** 2))
    return x if cur == 0 else x * (rms / cur)


def _bass(n, sr, rng, beat):
    out = np.zeros(n)
    roots = [41.2, 49.0, 55.0, 61.7, 73.4]
    pos = 0
    while pos < n:
        f0 = roots[rng.integers(len(roots))]
        dur = beat * rng.choice([1, 2])
        _place(out, harmonic_note(f0, dur * 0.95 / sr, sr, n_harm=10, tilt=1.2, decay=0.5, rng=rng), pos)
        pos += int(dur)
    return out


def _drums(n, sr, rng, beat):
    out = np.zeros(n)
    for k, pos in enumerate(range(0, n, beat)):
        m = int(0.25 * sr)
        t = np.arange(m) / sr
        if k % 2 == 0:
            f = 45 + 110 * np.exp(-t * 30)
            hit = np.sin(2 * np.pi * np.cumsum(f) / sr) * np.exp(-t * 18)
        else:
            hit = filtered_noise(m, 180, 6000, sr, rng) * np.exp(-t * 25)
            hit += 0.5 * np.sin(2 * np.pi * 190 * t) * np.exp(-t * 30)
        _place(out, hit, pos + int(rng.integers(0, 30)))
    return out


def _percussion(n, sr, rng, beat):
    out = np.zeros(n)
    step = beat // 2
    for pos in range(step // 2, n, step):
        if rng.random() < 0.2:
            continue
        m = int(0.06 * sr)
        t = np.arange(m) / sr
        hit = filtered_noise(m, 5000, 16000, sr, rng) * np.exp(-t * 70)
        hit[0] += 0.5
        _place(out, hit, pos)
    return out


def _keys(n, sr, rng, beat):
    out = np.zeros(n)
    chords = [(220.0, 277.2, 329.6), (196.0, 246.9, 293.7), (174.6, 220.0, 261.6), (246.9, 311.1, 370.0)]
    pos = 0
    while pos < n:
        dur = beat * 4
        for f in chords[rng.integers(len(chords))]:
            _place(out, harmonic_note(f, dur / sr, sr, n_harm=8, tilt=1.5, attack=0.005, decay=0.8,
                                      rng=rng), pos)
        pos += dur
    return out


def _lead(n, sr, rng, beat):
    out = np.zeros(n)
    scale = [293.7, 329.6, 370.0, 392.0, 440.0, 493.9, 587.3]
    pos = int(beat * rng.integers(0, 2))
    while pos < n:
        dur = beat * int(rng.choice([1, 1, 2, 3]))
        note = harmonic_note(scale[rng.integers(len(scale))], dur * 0.9 / sr, sr, n_harm=12, tilt=0.9,
                             attack=0.04, decay=1.5, vibrato=0.006, rng=rng)
        breath = filtered_noise(note.size, 1500, 6000, sr, rng) * _envelope(note.size, sr, 0.04, 1.5)
        _place(out, note + 0.05 * breath, pos)
        pos += dur + int(beat * rng.integers(0, 2))
    return out


_VOICES = {"bass": _bass, "drums": _drums, "percussion": _percussion, "keys": _keys, "lead": _lead}
_LEVELS = {"bass": 0.20, "drums": 0.15, "percussion": 0.05, "keys": 0.10, "lead": 0.10}


def band_fixture(duration: float = 15.0, sr: int = SR, seed: int = 0,
                 voices=("bass", "drums", "percussion", "keys", "lead"), tempo: float = 110.0) -> Multitrack:
    """Five-instrument band in the spirit of a small electro-jazz ensemble."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sr))
    beat = int(sr * 60.0 / tempo)
    stems = [_normalize(_VOICES[v](n, sr, rng, beat), _LEVELS[v]) for v in voices]
    return Multitrack(stems, sr, list(voices))


def two_source_fixture(duration: float = 5.0, sr: int = SR, seed: int = 0) -> Multitrack:
    """Keys and lead: harmonic sources sharing the same register."""
    return band_fixture(duration, sr, seed, voices=("keys", "lead"))


def transient_fixture(duration: float = 10.0, sr: int = SR, seed: int = 0) -> Multitrack:
    """Percussive click/burst stem over two tonal stems."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sr))
    beat = int(sr * 60.0 / 100.0)
    hits = np.zeros(n)
    for pos in range(beat // 3, n, beat // 2):
        m = int(0.03 * sr)
        t = np.arange(m) / sr
        burst = filtered_noise(m, 800, 12000, sr, rng) * np.exp(-t * 150)
        burst[0] += 1.0
        _place(hits, burst, pos)
    keys = _keys(n, sr, rng, beat)
    lead = _lead(n, sr, rng, beat)
    stems = [_normalize(hits, 0.08), _normalize(keys, 0.1), _normalize(lead, 0.1)]
    return Multitrack(stems, sr, ["clicks", "keys", "lead"])


def music_like(duration: float = 3.0, sr: int = SR, seed: int = 0) -> np.ndarray:
    """Single-channel mixture of the band fixture, for transform tests."""
    return band_fixture(duration, sr, seed).mix
