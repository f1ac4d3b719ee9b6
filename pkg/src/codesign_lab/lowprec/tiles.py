"""Fine-grained scaled FP8 quantization: 1x128 activation tiles, 128x128 weight blocks."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import LengthMismatchError
from .formats import E4M3, FloatFormat, decode_array, encode_array

TILE = 128
# floor for amax / max_finite so a subnormal-only tile never gets a zero scale
_MIN_SCALE = np.finfo(np.float64).smallest_subnormal


class TileShape(enum.Enum):
    TILE_1x128 = (1, TILE)
    BLOCK_128x128 = (TILE, TILE)

    @property
    def size(self) -> int:
        rows, cols = self.value
        return rows * cols


@dataclass(frozen=True)
class QuantizedTile:
    scale: float
    codes: np.ndarray
    shape: TileShape
    fmt: FloatFormat = E4M3

    def decoded(self) -> np.ndarray:
        """Unscaled format values, in the tile's 2-D shape."""
        return decode_array(self.codes, self.fmt).reshape(self.shape.value)

    def dequantize(self) -> np.ndarray:
        return self.scale * self.decoded()


def tile_scales(amax, fmt: FloatFormat = E4M3) -> np.ndarray:
    """Per-tile scales from per-tile max magnitudes (1 for all-zero tiles)."""
    amax = np.asarray(amax, dtype=np.float64)
    return np.where(amax > 0, np.maximum(amax / fmt.max_finite, _MIN_SCALE), 1.0)


def tile_quantize(values, shape: TileShape = TileShape.TILE_1x128, fmt: FloatFormat = E4M3) -> QuantizedTile:
    """Scale a tile so its max magnitude lands on ``fmt.max_finite``, then encode.

    An all-zero tile gets scale 1 and all-zero codes.
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size != shape.size:
        raise LengthMismatchError(f"{shape.name} needs {shape.size} values, got {v.size}")
    amax = float(np.max(np.abs(v))) if v.size else 0.0
    scale = max(amax / fmt.max_finite, _MIN_SCALE) if amax > 0 else 1.0
    codes = encode_array(v / scale, fmt)
    return QuantizedTile(scale=scale, codes=codes, shape=shape, fmt=fmt)


def quantize_activations(a, fmt: FloatFormat = E4M3) -> tuple[np.ndarray, np.ndarray]:
    """Tile-wise quantization of an (M, K) matrix along K.

    Returns ``(decoded, scales)`` where ``decoded`` holds unscaled format values
    of shape (M, K) and ``scales`` has shape (M, K // 128).
    """
    a = np.asarray(a, dtype=np.float64)
    m, k = a.shape
    tiles = a.reshape(m, k // TILE, TILE)
    amax = np.max(np.abs(tiles), axis=2)
    scales = tile_scales(amax, fmt)
    decoded = decode_array(encode_array(tiles / scales[:, :, None], fmt), fmt)
    return decoded.reshape(m, k), scales


def quantize_weights(b, fmt: FloatFormat = E4M3) -> tuple[np.ndarray, np.ndarray]:
    """Block-wise quantization of a (K, N) matrix in 128x128 blocks.

    Returns ``(decoded, scales)`` with ``scales`` of shape (K // 128, N // 128).
    """
    b = np.asarray(b, dtype=np.float64)
    k, n = b.shape
    blocks = b.reshape(k // TILE, TILE, n // TILE, TILE)
    amax = np.max(np.abs(blocks), axis=(1, 3))
    scales = tile_scales(amax, fmt)
    decoded = decode_array(encode_array(blocks / scales[:, None, :, None], fmt), fmt)
    return decoded.reshape(k, n), scales
