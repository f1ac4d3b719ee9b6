"""Parametric minifloat formats with bit-exact encode/decode.

Encoding is round-to-nearest-even with gradual underflow. Overflow follows
the format's special-value convention: FINITE_ONLY formats (OCP E4M3) have no
infinity and saturate to the largest finite value, IEEE_LIKE formats (E5M2)
round to infinity exactly as IEEE 754 does.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class SpecialEncoding(enum.Enum):
    IEEE_LIKE = "ieee_like"
    FINITE_ONLY = "finite_only"


@dataclass(frozen=True)
class FloatFormat:
    exponent_bits: int
    mantissa_bits: int
    special_encoding: SpecialEncoding = SpecialEncoding.IEEE_LIKE
    bias: int | None = None
    max_finite: float | None = None
    name: str = ""

    def __post_init__(self):
        e, m = self.exponent_bits, self.mantissa_bits
        if e < 2 or m < 0 or e + m + 1 > 32:
            raise ValueError(f"invalid float format E{e}M{m}")
        if self.special_encoding is SpecialEncoding.IEEE_LIKE and m < 1:
            raise ValueError("IEEE_LIKE formats need at least one mantissa bit for NaN")
        if self.bias is None:
            object.__setattr__(self, "bias", 2 ** (e - 1) - 1)
        derived = self._derived_max_finite()
        if self.max_finite is None:
            object.__setattr__(self, "max_finite", derived)
        elif self.max_finite != derived:
            raise ValueError(
                f"max_finite {self.max_finite} inconsistent with E{e}M{m} "
                f"{self.special_encoding.name} (expected {derived})"
            )
        if not self.name:
            object.__setattr__(self, "name", f"E{e}M{m}")

    def _derived_max_finite(self) -> float:
        e, m, bias = self.exponent_bits, self.mantissa_bits, self.bias
        top = 2**e - 1
        if self.special_encoding is SpecialEncoding.IEEE_LIKE:
            return math.ldexp(2 ** (m + 1) - 1, top - 1 - bias - m)
        if m == 0:
            # the single top-exponent code is NaN
            return math.ldexp(1.0, top - 1 - bias)
        # top exponent usable except the all-ones mantissa (NaN)
        return math.ldexp(2 ** (m + 1) - 2, top - bias - m)

    @property
    def width(self) -> int:
        return 1 + self.exponent_bits + self.mantissa_bits

    @property
    def min_normal_exponent(self) -> int:
        return 1 - self.bias

    @property
    def smallest_subnormal(self) -> float:
        return math.ldexp(1.0, self.min_normal_exponent - self.mantissa_bits)

    @property
    def canonical_nan(self) -> int:
        e, m = self.exponent_bits, self.mantissa_bits
        if self.special_encoding is SpecialEncoding.FINITE_ONLY:
            return (2 ** (e + m)) - 1
        return ((2**e - 1) << m) | (1 << (m - 1))

    def is_nan_code(self, code: int) -> bool:
        return math.isnan(fp_decode(code, self))


E4M3 = FloatFormat(4, 3, SpecialEncoding.FINITE_ONLY, name="E4M3")
E5M2 = FloatFormat(5, 2, SpecialEncoding.IEEE_LIKE, name="E5M2")


def _round_magnitude(mag: np.ndarray, fmt: FloatFormat) -> np.ndarray:
    """Round finite non-negative magnitudes onto the format grid (RNE)."""
    m = fmt.mantissa_bits
    emin = fmt.min_normal_exponent
    _, exp2 = np.frexp(mag)
    e = np.maximum(exp2.astype(np.int64) - 1, emin)
    quantum = np.ldexp(1.0, (e - m).astype(np.int32))
    # mag / quantum is exact (power-of-two scaling); rint ties to even
    r = np.rint(mag / quantum) * quantum
    over = r > fmt.max_finite
    if fmt.special_encoding is SpecialEncoding.FINITE_ONLY:
        r = np.where(over, fmt.max_finite, r)
    else:
        r = np.where(over, np.inf, r)
    return r


def encode_array(x, fmt: FloatFormat) -> np.ndarray:
    """Vectorised ``fp_encode``. Returns unsigned integer codewords."""
    x = np.asarray(x, dtype=np.float64)
    e, m, bias = fmt.exponent_bits, fmt.mantissa_bits, fmt.bias
    nan = np.isnan(x)
    sign = np.signbit(x) & ~nan
    mag = np.where(nan, 0.0, np.abs(x))
    inf_in = np.isinf(mag)
    if fmt.special_encoding is SpecialEncoding.FINITE_ONLY:
        mag = np.where(inf_in, fmt.max_finite, mag)
    else:
        mag = np.where(inf_in, 0.0, mag)

    with np.errstate(invalid="ignore", over="ignore"):
        r = _round_magnitude(mag, fmt)
    r_inf = np.isinf(r) | (inf_in & (fmt.special_encoding is SpecialEncoding.IEEE_LIKE))
    r = np.where(r_inf, 0.0, r)

    emin = fmt.min_normal_exponent
    _, exp2 = np.frexp(r)
    e_r = exp2.astype(np.int64) - 1
    sub = r < math.ldexp(1.0, emin)
    exp_field = np.where(sub, 0, e_r + bias)
    mant_sub = r / math.ldexp(1.0, emin - m)
    mant_norm = np.ldexp(r, (m - e_r).astype(np.int32)) - 2**m
    mant = np.where(sub, mant_sub, mant_norm).astype(np.int64)
    codes = (exp_field.astype(np.int64) << m) | mant
    codes = np.where(r_inf, (2**e - 1) << m, codes)
    codes = codes | (sign.astype(np.int64) << (e + m))
    codes = np.where(nan, fmt.canonical_nan, codes)
    return codes.astype(np.uint32)


def decode_array(codes, fmt: FloatFormat) -> np.ndarray:
    """Vectorised ``fp_decode``."""
    codes = np.asarray(codes, dtype=np.int64)
    e, m, bias = fmt.exponent_bits, fmt.mantissa_bits, fmt.bias
    if np.any((codes < 0) | (codes >= 2**fmt.width)):
        raise ValueError(f"codeword outside {fmt.width}-bit range")
    sign = (codes >> (e + m)) & 1
    ef = (codes >> m) & (2**e - 1)
    mf = codes & (2**m - 1)
    emin = fmt.min_normal_exponent
    sub_val = np.ldexp(mf.astype(np.float64), emin - m)
    norm_val = np.ldexp((mf + 2**m).astype(np.float64), (ef - bias - m).astype(np.int32))
    val = np.where(ef == 0, sub_val, norm_val)
    top = ef == 2**e - 1
    if fmt.special_encoding is SpecialEncoding.IEEE_LIKE:
        val = np.where(top & (mf == 0), np.inf, val)
        val = np.where(top & (mf != 0), np.nan, val)
    else:
        val = np.where(top & (mf == 2**m - 1), np.nan, val)
    return np.where(sign == 1, -val, val)


def fp_encode(x: float, fmt: FloatFormat) -> int:
    """Encode one real into ``fmt``; NaN yields the canonical NaN code."""
    return int(encode_array(np.float64(x), fmt))


def fp_decode(code: int, fmt: FloatFormat) -> float:
    return float(decode_array(np.int64(code), fmt))


def quantize_array(x, fmt: FloatFormat) -> np.ndarray:
    """Round values onto the format grid (encode followed by decode)."""
    return decode_array(encode_array(x, fmt), fmt)


def all_codes(fmt: FloatFormat) -> np.ndarray:
    if fmt.width > 16:
        raise ValueError("refusing to enumerate formats wider than 16 bits")
    return np.arange(2**fmt.width, dtype=np.int64)
