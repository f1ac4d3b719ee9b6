from .formats import E4M3, E5M2, FloatFormat, SpecialEncoding, decode_array, encode_array, fp_decode, fp_encode
from .fp22 import Fp22State, fp22_accumulate_group, simulated_gemm
from .logfmt import LogFmtBlock, logfmt_decode, logfmt_encode
from .stats import ErrorStats, format_error_stats
from .tiles import QuantizedTile, TileShape, tile_quantize

__all__ = [
    "E4M3",
    "E5M2",
    "ErrorStats",
    "FloatFormat",
    "Fp22State",
    "LogFmtBlock",
    "QuantizedTile",
    "SpecialEncoding",
    "TileShape",
    "decode_array",
    "encode_array",
    "format_error_stats",
    "fp22_accumulate_group",
    "fp_decode",
    "fp_encode",
    "logfmt_decode",
    "logfmt_encode",
    "simulated_gemm",
    "tile_quantize",
]
