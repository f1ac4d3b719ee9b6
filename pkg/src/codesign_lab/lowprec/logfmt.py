"""LogFMT-nBit: per-block logarithmic quantization.

A block's nonzero magnitudes are mapped onto a geometric grid spanning the
block's smallest and largest magnitude. Magnitude code 0 is an exact zero,
codes 1 .. 2**(n-1)-1 decode to ``exp(min_log + step * (K - 1))`` and the
leading bit of each codeword is the sign. Rounding happens in linear space:
the threshold between two adjacent codes is the arithmetic mean of their
decoded values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ..errors import EmptyBlockError

# dynamic range cap: min_log >= max_log - ln(2**32)
MAX_LOG_RANGE = 32 * math.log(2.0)

Rounding = Literal["nearest", "stochastic"]


@dataclass(frozen=True)
class LogFmtBlock:
    n_bits: int
    min_log: float
    step: float
    codes: np.ndarray

    @property
    def max_code(self) -> int:
        return 2 ** (self.n_bits - 1) - 1

    @property
    def max_log(self) -> float:
        return self.min_log + self.step * (self.max_code - 1)

    def grid(self) -> np.ndarray:
        """All representable nonzero magnitudes, indexed by code - 1."""
        return _grid(self.min_log, self.step, np.arange(self.max_code, dtype=np.float64))

    def __eq__(self, other):
        if not isinstance(other, LogFmtBlock):
            return NotImplemented
        return (
            self.n_bits == other.n_bits
            and self.min_log == other.min_log
            and self.step == other.step
            and np.array_equal(self.codes, other.codes)
        )

    __hash__ = None


def _grid(min_log, step, k) -> np.ndarray:
    # single shared expression so encode thresholds and decode agree bit-for-bit
    return np.exp(min_log + step * k)


def _check_bits(n_bits: int) -> None:
    if not 2 <= n_bits <= 16:
        raise ValueError(f"n_bits must be in [2, 16], got {n_bits}")


def block_parameters(values, n_bits: int) -> tuple[np.ndarray, np.ndarray]:
    """``(min_log, step)`` per block along the last axis.

    All-zero blocks get ``(0.0, 0.0)``. With ``n_bits == 2`` there is a single
    magnitude level, pinned to the block maximum.
    """
    _check_bits(n_bits)
    mag = np.abs(np.asarray(values, dtype=np.float64))
    nz = mag > 0
    any_nz = nz.any(axis=-1)
    with np.errstate(divide="ignore"):
        logs = np.log(np.where(nz, mag, 1.0))
    max_log = np.max(np.where(nz, logs, -np.inf), axis=-1)
    min_log = np.min(np.where(nz, logs, np.inf), axis=-1)
    max_log = np.where(any_nz, max_log, 0.0)
    min_log = np.where(any_nz, np.maximum(min_log, max_log - MAX_LOG_RANGE), 0.0)
    levels = 2 ** (n_bits - 1) - 2
    if levels == 0:
        return max_log, np.zeros_like(max_log)
    step = (max_log - min_log) / levels
    return min_log, step


def quantize_magnitudes(
    mag,
    min_log,
    step,
    n_bits: int,
    rounding: Rounding = "nearest",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Magnitude codes (0 .. 2**(n-1)-1) for ``mag`` against a fixed grid.

    ``min_log`` and ``step`` broadcast against ``mag`` (pass per-block values
    with a trailing axis). Magnitudes below the first grid point take code 1,
    above the last take the top code. Nearest mode sends exact midpoints up.
    """
    _check_bits(n_bits)
    mag = np.asarray(mag, dtype=np.float64)
    min_log = np.asarray(min_log, dtype=np.float64)
    step = np.asarray(step, dtype=np.float64)
    top = 2 ** (n_bits - 1) - 2  # highest 0-based grid index
    nz = mag > 0

    safe_step = np.where(step > 0, step, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (np.log(np.where(nz, mag, 1.0)) - min_log) / safe_step
    k = np.clip(np.floor(np.nan_to_num(t, nan=0.0, posinf=top, neginf=0.0)), 0, top)
    k = np.where(step > 0, k, 0.0)
    # the log-domain estimate can be one cell off; settle it against the real grid
    for _ in range(2):
        lo = _grid(min_log, step, k)
        k = np.where((k > 0) & (mag < lo), k - 1, k)
        hi = _grid(min_log, step, k + 1)
        k = np.where((k < top) & (mag >= hi) & (step > 0), k + 1, k)

    lo = _grid(min_log, step, k)
    hi = _grid(min_log, step, k + 1)
    can_rise = (k < top) & (step > 0) & (mag > lo)
    if rounding == "nearest":
        up = can_rise & (mag >= 0.5 * (lo + hi))
    elif rounding == "stochastic":
        if rng is None:
            raise ValueError("stochastic rounding needs an rng")
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.clip((mag - lo) / (hi - lo), 0.0, 1.0)
        up = can_rise & (rng.random(mag.shape) < p)
    else:
        raise ValueError(f"unknown rounding mode {rounding!r}")
    codes = k.astype(np.int64) + 1 + up
    return np.where(nz, codes, 0)


def encode_blocks(
    values,
    n_bits: int,
    rounding: Rounding = "nearest",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised encoder over the last axis: returns ``(min_log, step, codes)``."""
    v = np.asarray(values, dtype=np.float64)
    min_log, step = block_parameters(v, n_bits)
    mags = quantize_magnitudes(np.abs(v), min_log[..., None], step[..., None], n_bits, rounding, rng)
    sign = np.signbit(v).astype(np.int64)
    return min_log, step, (sign << (n_bits - 1)) | mags


def decode_blocks(min_log, step, codes, n_bits: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    mag_code = codes & (2 ** (n_bits - 1) - 1)
    sign = (codes >> (n_bits - 1)) & 1
    k = np.maximum(mag_code - 1, 0).astype(np.float64)
    mag = np.where(
        mag_code == 0,
        0.0,
        _grid(np.asarray(min_log)[..., None], np.asarray(step)[..., None], k),
    )
    return np.where(sign == 1, -mag, mag)


def logfmt_encode(
    values,
    n_bits: int = 8,
    rounding: Rounding = "nearest",
    rng: np.random.Generator | None = None,
) -> LogFmtBlock:
    """Encode one tile (normally 1x128) into a :class:`LogFmtBlock`."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise EmptyBlockError("cannot encode an empty block")
    if not np.all(np.isfinite(v)):
        raise ValueError("LogFMT blocks must be finite")
    min_log, step, codes = encode_blocks(v[None, :], n_bits, rounding, rng)
    return LogFmtBlock(n_bits, float(min_log[0]), float(step[0]), codes[0])


def logfmt_decode(block: LogFmtBlock) -> np.ndarray:
    return decode_blocks(
        np.array([block.min_log]), np.array([block.step]), block.codes[None, :], block.n_bits
    )[0]


def logfmt_requantize(values, block: LogFmtBlock) -> LogFmtBlock:
    """Encode ``values`` on an existing block's grid (parameters kept fixed)."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    mags = quantize_magnitudes(np.abs(v), block.min_log, block.step, block.n_bits)
    codes = (np.signbit(v).astype(np.int64) << (block.n_bits - 1)) | mags
    return LogFmtBlock(block.n_bits, block.min_log, block.step, codes)
