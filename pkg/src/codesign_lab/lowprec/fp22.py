"""Hopper-style FP8 Tensor Core accumulation into 22-bit (1/8/13) registers.

Each group of 32 products is aligned to the group's largest exponent, every
aligned significand keeps only its top 13 fraction bits (truncation toward
zero), the aligned terms are summed, and the sum is stored into FP22 with
another truncation. Every 128 elements of K the FP22 partial sum is promoted,
scaled by the activation-tile and weight-block scales, and added to an FP64
accumulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DimNotMultipleError
from .formats import E4M3, FloatFormat
from .tiles import TILE, quantize_activations, quantize_weights

GROUP = 32
FRACTION_BITS = 13
EXPONENT_BITS = 8
BIAS = 127
EMIN = 1 - BIAS
EMAX = 2**EXPONENT_BITS - 2 - BIAS


def _floor_log2(x: np.ndarray) -> np.ndarray:
    _, e = np.frexp(x)
    return e.astype(np.int64) - 1


def fp22_truncate(x) -> np.ndarray:
    """Truncate values toward zero onto the FP22 grid (13 fraction bits)."""
    x = np.asarray(x, dtype=np.float64)
    mag = np.abs(x)
    e = np.maximum(_floor_log2(mag), EMIN)
    quantum = np.ldexp(1.0, (e - FRACTION_BITS).astype(np.int32))
    t = np.trunc(mag / quantum) * quantum
    t = np.where(e > EMAX, np.inf, t)
    return np.copysign(t, x)


@dataclass(frozen=True)
class Fp22State:
    sign: int
    exponent: int
    mantissa: int

    def __post_init__(self):
        if self.sign not in (0, 1) or not 0 <= self.exponent < 256 or not 0 <= self.mantissa < 2**13:
            raise ValueError(f"invalid FP22 fields {self}")

    @classmethod
    def from_value(cls, x: float) -> Fp22State:
        """Store ``x`` (truncating) into FP22."""
        t = float(fp22_truncate(x))
        sign = 1 if math.copysign(1.0, t) < 0 else 0
        mag = abs(t)
        if math.isinf(mag):
            return cls(sign, 255, 0)
        if mag < math.ldexp(1.0, EMIN):
            return cls(sign, 0, int(mag / math.ldexp(1.0, EMIN - FRACTION_BITS)))
        e = math.frexp(mag)[1] - 1
        mant = int(math.ldexp(mag, FRACTION_BITS - e)) - 2**FRACTION_BITS
        return cls(sign, e + BIAS, mant)

    @property
    def value(self) -> float:
        if self.exponent == 255:
            v = math.inf if self.mantissa == 0 else math.nan
        elif self.exponent == 0:
            v = math.ldexp(self.mantissa, EMIN - FRACTION_BITS)
        else:
            v = math.ldexp(self.mantissa + 2**FRACTION_BITS, self.exponent - BIAS - FRACTION_BITS)
        return -v if self.sign else v

    def to_bits(self) -> int:
        return (self.sign << 21) | (self.exponent << 13) | self.mantissa

    @classmethod
    def from_bits(cls, bits: int) -> Fp22State:
        return cls((bits >> 21) & 1, (bits >> 13) & 0xFF, bits & 0x1FFF)


def group_max_exponent(products) -> np.ndarray:
    """floor(log2 |p|) of the largest product along the last axis (0 for all-zero groups)."""
    p = np.abs(np.asarray(products, dtype=np.float64))
    amax = np.max(p, axis=-1)
    return np.where(amax > 0, _floor_log2(np.where(amax > 0, amax, 1.0)), 0)


def align_truncate_sum(products) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised group accumulation along the last axis (length 32).

    Returns ``(fp22_sums, max_exponents)``.
    """
    p = np.asarray(products, dtype=np.float64)
    if p.shape[-1] != GROUP:
        raise ValueError(f"groups must hold {GROUP} products, got {p.shape[-1]}")
    e_max = group_max_exponent(p)
    quantum = np.ldexp(1.0, (e_max - FRACTION_BITS).astype(np.int32))[..., None]
    aligned = np.trunc(p / quantum) * quantum
    # |aligned/quantum| < 2**14 per term, so the 32-term sum is exact in float64
    return fp22_truncate(aligned.sum(axis=-1)), e_max


def fp22_accumulate_group(products) -> Fp22State:
    """Tensor Core sum of one 32-product group, as an FP22 register value."""
    p = np.asarray(products, dtype=np.float64).reshape(-1)
    if p.size != GROUP:
        raise ValueError(f"expected {GROUP} products, got {p.size}")
    total, _ = align_truncate_sum(p)
    return Fp22State.from_value(float(total))


def group_error_bound(products) -> float:
    """The alignment bound 32 * 2**(e_max - 13) for one group."""
    e_max = int(group_max_exponent(np.asarray(products, dtype=np.float64).reshape(-1)))
    return GROUP * math.ldexp(1.0, e_max - FRACTION_BITS)


@dataclass
class GemmReport:
    result: np.ndarray
    reference: np.ndarray
    error_bound: np.ndarray
    max_abs_error: float
    mean_abs_error: float


def _check_dims(*dims: int) -> None:
    for d in dims:
        if d <= 0 or d % TILE:
            raise DimNotMultipleError(f"dimension {d} is not a positive multiple of {TILE}")


def simulated_gemm_quantized(a_dec, a_scales, b_dec, b_scales) -> GemmReport:
    """Run the FP22 pipeline on already-quantized operands.

    ``a_dec`` (M, K) and ``b_dec`` (K, N) hold unscaled format values,
    ``a_scales`` is (M, K/128) and ``b_scales`` is (K/128, N/128).
    """
    a_dec = np.asarray(a_dec, dtype=np.float64)
    b_dec = np.asarray(b_dec, dtype=np.float64)
    m, k = a_dec.shape
    k2, n = b_dec.shape
    if k != k2:
        raise ValueError(f"inner dimensions differ: {k} vs {k2}")
    _check_dims(m, k, n)
    sb_full = np.repeat(np.asarray(b_scales, dtype=np.float64), TILE, axis=1)  # (K/128, N)

    acc = np.zeros((m, n))
    ref = np.zeros((m, n))
    bound = np.zeros((m, n))
    inner_slack = 2.0**-FRACTION_BITS * (1 + 4 * 1.001)
    for c in range(k // TILE):
        sl = slice(c * TILE, (c + 1) * TILE)
        prods = a_dec[:, None, sl] * b_dec[sl, :].T[None, :, :]  # exact: FP8 x FP8
        groups = prods.reshape(m, n, TILE // GROUP, GROUP)
        sums, e_max = align_truncate_sum(groups)
        partial = np.zeros((m, n))
        for g in range(TILE // GROUP):
            partial = fp22_truncate(partial + sums[:, :, g])
        sa = a_scales[:, c][:, None]
        sb = sb_full[c][None, :]
        # activation scale first: exact for one-hot rows (448 * b * fl(1/448) == b)
        acc += (partial * sa) * sb
        ref += (prods.sum(axis=-1) * sa) * sb
        align_bound = (GROUP * np.ldexp(1.0, (e_max - FRACTION_BITS).astype(np.int32))).sum(axis=-1)
        store_bound = inner_slack * np.abs(prods).sum(axis=-1)
        bound += np.abs(sa * sb) * (align_bound + store_bound)
    # float64 rounding in the outer accumulation
    bound += 1e-12 * np.abs(ref) + 1e-300
    err = np.abs(acc - ref)
    return GemmReport(acc, ref, bound, float(err.max()), float(err.mean()))


def simulated_gemm(a, b, fmt: FloatFormat = E4M3) -> GemmReport:
    """Quantize ``a`` tile-wise and ``b`` block-wise, then run the FP22 pipeline.

    The reference is the exact product of the *quantized* operands.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_dims(*a.shape, *b.shape)
    a_dec, sa = quantize_activations(a, fmt)
    b_dec, sb = quantize_weights(b, fmt)
    return simulated_gemm_quantized(a_dec, sa, b_dec, sb)
