"""Side-information container and its ``.issr`` byte format.

Layout (all integers little-endian)::

    prefix   magic "ISSR" | version u16 | total length u32 | crc32 u32
    header   backend u8 | code width u8 | flags u8 | sample rate u32
             | length u32 | sources u16 | large window u32 | small window u32
             | overlap code u8 | u i32 | rho u32 | T i32
             | large bands u16 | small bands u16 | transients u32
    lists    transient frames u32 * n | per source (large norm, small norm) i32
    payload  length u32 | entropy-coded bytes

dB quantities travel as signed centi-dB and rho as parts per million, so no
floating point value crosses the wire.  The CRC covers everything after the
prefix.  The compressed payload holds, in order, the level codes of every
source (large then small frames), followed by the packed activity bits.
Level codes are ``0`` for a silent band and ``1 - level`` otherwise.
"""

from __future__ import annotations

import bz2
import lzma
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .quantize import SILENT

__all__ = [
    "MAGIC",
    "VERSION",
    "BACKENDS",
    "SourceBlock",
    "SideInfoBundle",
    "BitstreamError",
    "BadMagic",
    "UnsupportedVersion",
    "TruncatedStream",
    "ChecksumMismatch",
    "NoSources",
    "CorruptPayload",
    "entropy_encode",
    "entropy_decode",
    "serialize",
    "deserialize",
    "measure_rate",
]

MAGIC = b"ISSR"
VERSION = 1

_PREFIX = struct.Struct("<4sHII")
_HEADER = struct.Struct("<BBBIIHIIBiIiHHI")

FLAG_DUAL = 1

BACKENDS = {"none": 0, "zlib": 1, "bz2": 2, "lzma": 3}
_BACKEND_NAMES = {v: k for k, v in BACKENDS.items()}


class BitstreamError(ValueError):
    """Base class for every decoding failure."""


class BadMagic(BitstreamError):
    pass


class UnsupportedVersion(BitstreamError):
    pass


class TruncatedStream(BitstreamError):
    pass


class ChecksumMismatch(BitstreamError):
    pass


class NoSources(BitstreamError):
    pass


class CorruptPayload(BitstreamError):
    pass


@dataclass(eq=False)
class SourceBlock:
    """Coded data of one source.

    Level arrays hold quantized band levels (``SILENT`` for discarded
    bands): ``(frames, large bands)`` and ``(transients, small frames per
    transient, small bands)``.  Activity arrays have the same shapes.
    """

    norm_large_cdb: int
    norm_small_cdb: int
    levels_large: np.ndarray
    levels_small: np.ndarray
    active_large: np.ndarray
    active_small: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, SourceBlock):
            return NotImplemented
        return (
            self.norm_large_cdb == other.norm_large_cdb
            and self.norm_small_cdb == other.norm_small_cdb
            and _same(self.levels_large, other.levels_large)
            and _same(self.levels_small, other.levels_small)
            and _same(self.active_large, other.active_large)
            and _same(self.active_small, other.active_small)
        )


def _same(a, b) -> bool:
    a, b = np.asarray(a), np.asarray(b)
    return a.shape == b.shape and np.array_equal(a, b)


@dataclass(eq=False)
class SideInfoBundle:
    """Everything the decoder needs besides the mixture."""

    sample_rate: int
    length: int
    window_large: int
    window_small: int
    overlap_code: int
    u_cdb: int
    rho_ppm: int
    T_cdb: int
    bands_large: int
    bands_small: int
    transients: tuple[int, ...]
    sources: list[SourceBlock] = field(default_factory=list)
    dual: bool = False
    backend: str = "zlib"

    @property
    def num_sources(self) -> int:
        return len(self.sources)

    @property
    def duration(self) -> float:
        return self.length / self.sample_rate

    @property
    def overlap(self) -> float:
        return 1.0 - 1.0 / self.overlap_code

    def __eq__(self, other):
        if not isinstance(other, SideInfoBundle):
            return NotImplemented
        scalars = (
            "sample_rate", "length", "window_large", "window_small", "overlap_code", "u_cdb",
            "rho_ppm", "T_cdb", "bands_large", "bands_small", "dual", "backend",
        )
        return (
            all(getattr(self, k) == getattr(other, k) for k in scalars)
            and tuple(self.transients) == tuple(other.transients)
            and len(self.sources) == len(other.sources)
            and all(a == b for a, b in zip(self.sources, other.sources))
        )


def entropy_encode(data: bytes, backend: str = "zlib") -> bytes:
    """Lossless compression of ``data`` with the named backend."""
    if backend not in BACKENDS:
        raise ValueError(f"unknown entropy backend {backend!r}")
    data = bytes(data)
    if not data:
        return b""
    if backend == "zlib":
        return zlib.compress(data, 9)
    if backend == "bz2":
        return bz2.compress(data, 9)
    if backend == "lzma":
        return lzma.compress(data, preset=9)
    return data


def entropy_decode(data: bytes, backend: str = "zlib") -> bytes:
    if backend not in BACKENDS:
        raise ValueError(f"unknown entropy backend {backend!r}")
    data = bytes(data)
    if not data:
        return b""
    try:
        if backend == "zlib":
            return zlib.decompress(data)
        if backend == "bz2":
            return bz2.decompress(data)
        if backend == "lzma":
            return lzma.decompress(data)
    except (zlib.error, OSError, EOFError, lzma.LZMAError, ValueError) as exc:
        raise CorruptPayload(f"entropy decoding failed: {exc}") from exc
    return data


def _frames_for(length: int, window: int, hop: int) -> int:
    return -(-(length + window) // hop) + 1


def _shapes(bundle: SideInfoBundle):
    hop_l = bundle.window_large // bundle.overlap_code
    hop_s = bundle.window_small // bundle.overlap_code
    frames = _frames_for(bundle.length, bundle.window_large, hop_l)
    per = (bundle.window_large - bundle.window_small) // hop_s + 1
    return (frames, bundle.bands_large), (len(bundle.transients), per, bundle.bands_small)


def _to_codes(levels: np.ndarray) -> np.ndarray:
    levels = np.asarray(levels, dtype=np.int64)
    codes = np.where(levels == SILENT, 0, 1 - levels)
    if np.any(codes < 0):
        raise ValueError("quantized levels must not exceed zero")
    return codes


def _validate(bundle: SideInfoBundle):
    if not bundle.sources:
        raise NoSources("no sources")
    if bundle.backend not in BACKENDS:
        raise ValueError(f"unknown entropy backend {bundle.backend!r}")
    if bundle.overlap_code not in (2, 4):
        raise ValueError("overlap code must be 2 or 4")
    tr = np.asarray(bundle.transients, dtype=np.int64)
    if tr.size > 1 and np.any(np.diff(tr) <= 0):
        raise ValueError("transient frames must be strictly increasing")
    large_shape, small_shape = _shapes(bundle)
    for j, src in enumerate(bundle.sources):
        if np.shape(src.levels_large) != large_shape or np.shape(src.active_large) != large_shape:
            raise ValueError(f"source {j}: large-window data has wrong shape")
        if np.shape(src.levels_small) != small_shape or np.shape(src.active_small) != small_shape:
            raise ValueError(f"source {j}: small-window data has wrong shape")


def serialize(bundle: SideInfoBundle) -> bytes:
    """Encode ``bundle`` to its ``.issr`` byte representation."""
    _validate(bundle)
    codes = [np.concatenate([_to_codes(s.levels_large).ravel(), _to_codes(s.levels_small).ravel()])
             for s in bundle.sources]
    codes = np.concatenate(codes)
    top = int(codes.max()) if codes.size else 0
    if top < 256:
        width, dtype = 1, np.uint8
    elif top < 65536:
        width, dtype = 2, np.dtype("<u2")
    else:
        raise ValueError("quantized levels span too many steps")
    bits = np.concatenate([np.concatenate([np.asarray(s.active_large, bool).ravel(),
                                           np.asarray(s.active_small, bool).ravel()])
                           for s in bundle.sources])
    raw = codes.astype(dtype).tobytes() + np.packbits(bits).tobytes()
    payload = entropy_encode(raw, bundle.backend)

    n_tr = len(bundle.transients)
    body = _HEADER.pack(
        BACKENDS[bundle.backend], width, FLAG_DUAL if bundle.dual else 0,
        bundle.sample_rate, bundle.length, len(bundle.sources),
        bundle.window_large, bundle.window_small, bundle.overlap_code,
        bundle.u_cdb, bundle.rho_ppm, bundle.T_cdb,
        bundle.bands_large, bundle.bands_small, n_tr,
    )
    body += struct.pack(f"<{n_tr}I", *bundle.transients)
    norms = [v for s in bundle.sources for v in (s.norm_large_cdb, s.norm_small_cdb)]
    body += struct.pack(f"<{len(norms)}i", *norms)
    body += struct.pack("<I", len(payload)) + payload
    total = _PREFIX.size + len(body)
    return _PREFIX.pack(MAGIC, VERSION, total, zlib.crc32(body)) + body


def deserialize(data: bytes) -> SideInfoBundle:
    """Decode an ``.issr`` byte string.

    Raises:
        TruncatedStream, BadMagic, UnsupportedVersion, ChecksumMismatch,
        NoSources, CorruptPayload: all subclasses of :class:`BitstreamError`.
    """
    data = bytes(data)
    if len(data) < 4:
        raise TruncatedStream("truncated stream")
    if data[:4] != MAGIC:
        raise BadMagic("bad magic")
    if len(data) < _PREFIX.size:
        raise TruncatedStream("truncated stream")
    _, version, total, crc = _PREFIX.unpack_from(data)
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported version {version}")
    if len(data) < total:
        raise TruncatedStream(f"truncated stream: {len(data)} of {total} bytes")
    body = data[_PREFIX.size:]
    if len(data) != total or zlib.crc32(body) != crc:
        raise ChecksumMismatch("checksum mismatch")

    try:
        (backend_id, width, flags, sample_rate, length, n_src, win_l, win_s, ov, u_cdb, rho_ppm,
         T_cdb, bands_l, bands_s, n_tr) = _HEADER.unpack_from(body)
        pos = _HEADER.size
        transients = struct.unpack_from(f"<{n_tr}I", body, pos)
        pos += 4 * n_tr
        norms = struct.unpack_from(f"<{2 * n_src}i", body, pos)
        pos += 8 * n_src
        (n_payload,) = struct.unpack_from("<I", body, pos)
        pos += 4
    except struct.error as exc:
        raise CorruptPayload(f"malformed header: {exc}") from exc
    if n_src == 0:
        raise NoSources("no sources")
    if backend_id not in _BACKEND_NAMES:
        raise CorruptPayload(f"unknown entropy backend id {backend_id}")
    if width not in (1, 2) or ov not in (2, 4) or pos + n_payload != len(body):
        raise CorruptPayload("inconsistent header fields")
    if (min(win_l, win_s, length, bands_l, bands_s, sample_rate, u_cdb) < 1
            or win_l % ov or win_s % ov):
        raise CorruptPayload("invalid grid or quantizer fields")
    backend = _BACKEND_NAMES[backend_id]
    raw = entropy_decode(body[pos:], backend)

    bundle = SideInfoBundle(
        sample_rate=sample_rate, length=length, window_large=win_l, window_small=win_s,
        overlap_code=ov, u_cdb=u_cdb, rho_ppm=rho_ppm, T_cdb=T_cdb, bands_large=bands_l,
        bands_small=bands_s, transients=tuple(transients), dual=bool(flags & FLAG_DUAL),
        backend=backend,
    )
    large_shape, small_shape = _shapes(bundle)
    n_large, n_small = int(np.prod(large_shape)), int(np.prod(small_shape))
    per_source = n_large + n_small
    n_codes = per_source * n_src
    n_bits = -(-n_codes // 8)
    if len(raw) != n_codes * width + n_bits:
        raise CorruptPayload("payload size does not match header")
    dtype = np.uint8 if width == 1 else np.dtype("<u2")
    codes = np.frombuffer(raw, dtype=dtype, count=n_codes).astype(np.int64)
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8, offset=n_codes * width),
                         count=n_codes).astype(bool)
    levels = np.where(codes == 0, SILENT, 1 - codes).astype(np.int32)

    for j in range(n_src):
        a = j * per_source
        bundle.sources.append(SourceBlock(
            norm_large_cdb=norms[2 * j],
            norm_small_cdb=norms[2 * j + 1],
            levels_large=levels[a:a + n_large].reshape(large_shape),
            levels_small=levels[a + n_large:a + per_source].reshape(small_shape),
            active_large=bits[a:a + n_large].reshape(large_shape),
            active_small=bits[a + n_large:a + per_source].reshape(small_shape),
        ))
    return bundle


def measure_rate(stream: bytes | int, duration: float, num_sources: int) -> float:
    """Side-information rate in kb per source per second.

    ``stream`` may be the byte string itself or its length in bytes.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    if num_sources < 1:
        raise ValueError("need at least one source")
    size = stream if isinstance(stream, int) else len(stream)
    return 8.0 * size / 1000.0 / duration / num_sources
