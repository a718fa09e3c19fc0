"""Side-information coding: quantization, bitstream format, rate control."""

from .bitstream import (
    BitstreamError,
    SideInfoBundle,
    SourceBlock,
    deserialize,
    entropy_decode,
    entropy_encode,
    measure_rate,
    serialize,
)
from .coder import RateResult, RateUnreachable, decode, encode, rate_control
from .quantize import (
    CodecConfig,
    band_edges,
    dequantize_spectrogram,
    decode_activity,
    encode_activity,
    quantize_spectrogram,
)
from .sideinfo import analyze_sources, decoded_activity, decoded_magnitudes, grid_from_bundle, make_bundle

__all__ = [
    "BitstreamError",
    "SideInfoBundle",
    "SourceBlock",
    "deserialize",
    "entropy_decode",
    "entropy_encode",
    "measure_rate",
    "serialize",
    "CodecConfig",
    "band_edges",
    "dequantize_spectrogram",
    "decode_activity",
    "encode_activity",
    "quantize_spectrogram",
    "RateResult",
    "RateUnreachable",
    "decode",
    "encode",
    "rate_control",
    "analyze_sources",
    "decoded_activity",
    "decoded_magnitudes",
    "grid_from_bundle",
    "make_bundle",
]
