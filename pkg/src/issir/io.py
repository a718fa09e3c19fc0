"""Mono WAV reading and writing."""

from __future__ import annotations

import struct
import warnings
from pathlib import Path

import numpy as np
from scipy.io import wavfile

__all__ = ["AudioFormatError", "read_wav", "write_wav"]


class AudioFormatError(ValueError):
    """The file is not a readable mono WAV."""


_INT_SCALE = {np.dtype("int16"): 32768.0, np.dtype("int32"): 2147483648.0}


def read_wav(path) -> tuple[np.ndarray, int]:
    """Samples as float64 in [-1, 1] and the sample rate.

    Accepts 16/32-bit integer PCM, unsigned 8-bit PCM, and float files.

    Raises:
        AudioFormatError: multichannel, unsupported or unreadable file.
    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(Path(path))
    except (ValueError, EOFError, OSError, struct.error) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise AudioFormatError(f"{path}: unreadable WAV ({exc})") from exc
    if data.ndim != 1:
        raise AudioFormatError(f"{path}: mono required, got {data.shape[1]} channels")
    if data.dtype in _INT_SCALE:
        x = data.astype(np.float64) / _INT_SCALE[data.dtype]
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype.kind == "f":
        x = data.astype(np.float64)
    else:
        raise AudioFormatError(f"{path}: unsupported sample format {data.dtype}")
    if x.size == 0:
        raise AudioFormatError(f"{path}: empty file")
    return x, int(rate)


def write_wav(path, x, sample_rate: int, float_output: bool = False) -> None:
    """Write a mono signal, as 16-bit PCM unless ``float_output`` is set.

    Samples outside [-1, 1] are clipped (with a warning) for PCM output.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise AudioFormatError("mono required")
    if float_output:
        wavfile.write(Path(path), int(sample_rate), x.astype(np.float32))
        return
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak > 1.0:
        warnings.warn(f"clipping {path}: peak {peak:.3f}", RuntimeWarning, stacklevel=2)
        x = np.clip(x, -1.0, 1.0)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(Path(path), int(sample_rate), pcm)
