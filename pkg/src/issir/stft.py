"""Short-time Fourier analysis and synthesis on uniform and dual-resolution grids.

A spectrogram is a plain complex ``numpy`` array whose layout is fixed by its
grid.  On a :class:`GridSpec` it has shape ``(num_frames, num_bins)``.  On a
:class:`DualGridSpec` it is a flat vector holding the large-window
coefficients followed by the small-window coefficients of every transient
frame; :meth:`DualGridSpec.split` and :meth:`DualGridSpec.join` convert
between the flat and structured views.  Keeping both layouts as ordinary
arrays means every element-wise operation of the reconstruction code works
unchanged on either grid; only :func:`stft`, :func:`istft` and
:func:`project` need to know the geometry.

The signal is zero-padded by one full window on each side so that every
sample has full window coverage, and synthesis trims the padding again.
Analysis and synthesis both use a periodic square-root Hann window, which
satisfies the constant overlap-add condition at 50% and 75% overlap.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridSpec",
    "DualGridSpec",
    "sqrt_hann",
    "stft",
    "istft",
    "project",
    "gl_objective",
    "griffin_lim",
]

OVERLAPS = {0.5: 2, 0.75: 4}


@functools.lru_cache(maxsize=None)
def sqrt_hann(n: int) -> np.ndarray:
    """Periodic square-root Hann window of length ``n`` (read-only)."""
    k = np.arange(n)
    w = np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * k / n))
    w.setflags(write=False)
    return w


@dataclass(frozen=True)
class GridSpec:
    """Uniform STFT geometry for a signal of ``length`` samples.

    ``hop`` must be half or a quarter of ``window_length``.  Frame ``f``
    covers padded samples ``[f * hop, f * hop + window_length)``, where the
    padded signal carries ``window_length`` zeros before the first sample.
    """

    window_length: int
    hop: int
    length: int
    sample_rate: float = 44100.0

    def __post_init__(self):
        if self.window_length < 4 or self.window_length % 4:
            raise ValueError(f"window length must be a positive multiple of 4, got {self.window_length}")
        if self.hop not in (self.window_length // 2, self.window_length // 4):
            raise ValueError(f"hop {self.hop} is not 50% or 75% overlap of {self.window_length}")
        if self.length < 1:
            raise ValueError("empty input")
        if not self.sample_rate > 0:
            raise ValueError("sample rate must be positive")

    @classmethod
    def for_signal(cls, length: int, window_length: int = 2048, overlap: float = 0.5,
                   sample_rate: float = 44100.0) -> "GridSpec":
        if overlap not in OVERLAPS:
            raise ValueError(f"overlap must be one of {sorted(OVERLAPS)}, got {overlap}")
        return cls(window_length, window_length // OVERLAPS[overlap], length, sample_rate)

    @property
    def overlap(self) -> float:
        return 1.0 - self.hop / self.window_length

    @property
    def num_bins(self) -> int:
        return self.window_length // 2 + 1

    @property
    def pad(self) -> int:
        return self.window_length

    @property
    def num_frames(self) -> int:
        return -(-(self.length + self.window_length) // self.hop) + 1

    @property
    def padded_length(self) -> int:
        return (self.num_frames - 1) * self.hop + self.window_length

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_frames, self.num_bins)

    @property
    def window(self) -> np.ndarray:
        return sqrt_hann(self.window_length)

    def frame_start(self, frame: int) -> int:
        """Padded-sample offset of ``frame``."""
        return frame * self.hop

    def frame_time(self, frame) -> np.ndarray:
        """Signal time in samples of the centre of ``frame`` (may be negative)."""
        return np.asarray(frame) * self.hop + self.window_length // 2 - self.pad

    def interior_frames(self) -> np.ndarray:
        """Indices of frames lying entirely inside the unpadded signal."""
        f = np.arange(self.num_frames)
        start = f * self.hop
        return f[(start >= self.pad) & (start + self.window_length <= self.pad + self.length)]

    def with_window(self, window_length: int) -> "GridSpec":
        """Same length and overlap ratio with a different window size."""
        ratio = self.window_length // self.hop
        return GridSpec(window_length, window_length // ratio, self.length, self.sample_rate)


@dataclass(frozen=True)
class DualGridSpec:
    """Large-window grid everywhere plus small windows at transient frames.

    Each transient large frame ``f`` receives small frames starting at
    ``f * large.hop + k * small.hop`` for ``k = 0 .. per_transient - 1``,
    which tile the large frame's span exactly.
    """

    large: GridSpec
    small: GridSpec
    transient_frames: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "transient_frames", tuple(int(f) for f in self.transient_frames))
        if self.small.length != self.large.length:
            raise ValueError("large and small grids must describe the same signal")
        if self.large.window_length % self.small.window_length:
            raise ValueError("small window must divide the large window")
        tf = np.asarray(self.transient_frames, dtype=np.int64)
        if tf.size and np.any(np.diff(tf) <= 0):
            raise ValueError("transient frames must be strictly increasing")
        if tf.size and (tf[0] < 0 or tf[-1] >= self.large.num_frames):
            raise ValueError("transient frame index out of range")

    @property
    def length(self) -> int:
        return self.large.length

    @property
    def sample_rate(self) -> float:
        return self.large.sample_rate

    @property
    def per_transient(self) -> int:
        """Number of small frames tiling one large frame."""
        return (self.large.window_length - self.small.window_length) // self.small.hop + 1

    @property
    def small_shape(self) -> tuple[int, int, int]:
        return (len(self.transient_frames), self.per_transient, self.small.num_bins)

    @property
    def shape(self) -> tuple[int]:
        return (self.large.num_frames * self.large.num_bins + int(np.prod(self.small_shape)),)

    def small_starts(self) -> np.ndarray:
        """Padded-sample offsets of small frames, shape ``(n_transients, per_transient)``."""
        tf = np.asarray(self.transient_frames, dtype=np.int64)
        k = np.arange(self.per_transient)
        return tf[:, None] * self.large.hop + k[None, :] * self.small.hop

    def split(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Views ``(large, small)`` of a flat dual spectrogram."""
        X = np.asarray(X)
        if X.shape != self.shape:
            raise ValueError(f"spectrogram shape {X.shape} does not match grid {self.shape}")
        n = self.large.num_frames * self.large.num_bins
        return X[:n].reshape(self.large.shape), X[n:].reshape(self.small_shape)

    def join(self, large: np.ndarray, small: np.ndarray) -> np.ndarray:
        large = np.asarray(large)
        small = np.asarray(small)
        if large.shape != self.large.shape or small.shape != self.small_shape:
            raise ValueError("large/small parts do not match the dual grid")
        return np.concatenate([large.reshape(-1), small.reshape(-1)])


def _check_signal(x, grid) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("empty input")
    if x.size != grid.length:
        raise ValueError(f"signal has {x.size} samples, grid expects {grid.length}")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")
    return x


def _padded(x: np.ndarray, grid: GridSpec) -> np.ndarray:
    buf = np.zeros(grid.padded_length)
    buf[grid.pad:grid.pad + grid.length] = x
    return buf


def _analyze_uniform(buf: np.ndarray, grid: GridSpec) -> np.ndarray:
    frames = np.lib.stride_tricks.sliding_window_view(buf, grid.window_length)[::grid.hop]
    return np.fft.rfft(frames * grid.window, axis=-1)


def _analyze_small(buf: np.ndarray, dual: DualGridSpec) -> np.ndarray:
    starts = dual.small_starts()
    idx = starts[:, :, None] + np.arange(dual.small.window_length)
    return np.fft.rfft(buf[idx] * dual.small.window, axis=-1)


def _overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    """Overlap-add rows of ``frames`` (``window_length`` a multiple of ``hop``)."""
    n, w = frames.shape
    out = np.zeros((n - 1) * hop + w)
    for k in range(w // hop):
        out[k * hop:k * hop + n * hop] += frames[:, k * hop:(k + 1) * hop].reshape(-1)
    return out


@functools.lru_cache(maxsize=64)
def _uniform_norm(grid: GridSpec) -> np.ndarray:
    w2 = np.broadcast_to(grid.window ** 2, (grid.num_frames, grid.window_length))
    return _overlap_add(np.ascontiguousarray(w2), grid.hop)


@functools.lru_cache(maxsize=64)
def _dual_norm(dual: DualGridSpec) -> np.ndarray:
    norm = _uniform_norm(dual.large).copy()
    if dual.transient_frames:
        block = _overlap_add(np.tile(dual.small.window ** 2, (dual.per_transient, 1)), dual.small.hop)
        for f in dual.transient_frames:
            s = f * dual.large.hop
            norm[s:s + block.size] += block
    return norm


def stft(x, grid) -> np.ndarray:
    """Analyse ``x`` on ``grid``.

    Args:
        x: real signal with ``grid.length`` samples.
        grid: a :class:`GridSpec` or :class:`DualGridSpec`.

    Returns:
        Complex array of shape ``grid.shape``.  Frame ``f`` holds the
        ``rfft`` of the windowed segment starting at padded offset
        ``f * hop``.
    """
    x = _check_signal(x, grid)
    if isinstance(grid, DualGridSpec):
        buf = _padded(x, grid.large)
        large = _analyze_uniform(buf, grid.large)
        if not grid.transient_frames:
            return large.reshape(-1)
        return grid.join(large, _analyze_small(buf, grid))
    return _analyze_uniform(_padded(x, grid), grid)


def istft(X, grid) -> np.ndarray:
    """Least-squares overlap-add synthesis.

    Computes ``sum_f w(t - t_f) * irfft(X_f) / sum_f w(t - t_f)**2`` over all
    frames of the grid (both sizes on a dual grid), then strips the padding.
    For a consistent ``X`` this inverts :func:`stft` exactly.
    """
    X = np.asarray(X)
    if X.shape != grid.shape:
        raise ValueError(f"spectrogram shape {X.shape} does not match grid {grid.shape}")
    if isinstance(grid, DualGridSpec):
        large, small = grid.split(X)
        lg = grid.large
        num = _overlap_add(np.fft.irfft(large, n=lg.window_length, axis=-1) * lg.window, lg.hop)
        if grid.transient_frames:
            sg = grid.small
            frames = np.fft.irfft(small, n=sg.window_length, axis=-1) * sg.window
            idx = grid.small_starts()[:, :, None] + np.arange(sg.window_length)
            np.add.at(num, idx.reshape(-1), frames.reshape(-1))
        norm = _dual_norm(grid)
    else:
        lg = grid
        num = _overlap_add(np.fft.irfft(X, n=lg.window_length, axis=-1) * lg.window, lg.hop)
        norm = _uniform_norm(grid)
    sl = slice(lg.pad, lg.pad + lg.length)
    return num[sl] / norm[sl]


def project(X, grid) -> np.ndarray:
    """Consistency projection: ``stft(istft(X))``.  Idempotent."""
    return stft(istft(X, grid), grid)


def gl_objective(X_hat, target_mag) -> float:
    """Normalised squared magnitude mismatch ``sum(|X_hat| - S)**2 / sum(S**2)``."""
    target_mag = np.asarray(target_mag, dtype=float)
    X_hat = np.asarray(X_hat)
    if X_hat.shape != target_mag.shape:
        raise ValueError("estimate and target magnitudes differ in shape")
    den = np.sum(target_mag ** 2)
    if den == 0:
        raise ValueError("degenerate objective")
    return float(np.sum((np.abs(X_hat) - target_mag) ** 2) / den)


def griffin_lim(target_mag, init_phase, n_iter: int, grid, return_objective: bool = False):
    """Griffin & Lim phase retrieval from a magnitude spectrogram.

    Iterates ``S_k = project(|S| * exp(1j * angle(S_{k-1})))`` starting from
    ``init_phase``.

    Args:
        target_mag: non-negative magnitudes, shape ``grid.shape``.
        init_phase: initial phase in radians, same shape.
        n_iter: number of iterations, at least one.
        grid: analysis grid.
        return_objective: also return the objective after each iteration.

    Returns:
        The magnitude-snapped final estimate ``|S| * exp(1j * angle(S_K))``,
        and optionally the list of objective values.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    target_mag = np.asarray(target_mag, dtype=float)
    init_phase = np.asarray(init_phase, dtype=float)
    if target_mag.shape != grid.shape or init_phase.shape != grid.shape:
        raise ValueError("target magnitude / phase do not match grid")
    est = target_mag * np.exp(1j * init_phase)
    history = []
    for _ in range(n_iter):
        est = project(target_mag * np.exp(1j * np.angle(est)), grid)
        if return_objective:
            history.append(gl_objective(est, target_mag))
    out = target_mag * np.exp(1j * np.angle(est))
    return (out, history) if return_objective else out
