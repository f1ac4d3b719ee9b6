"""Monte-Carlo quantization error statistics on seeded 1x128 blocks."""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass

import numpy as np

from .formats import E4M3, E5M2, decode_array, encode_array
from .logfmt import decode_blocks, encode_blocks
from .tiles import TILE, tile_scales

DISTRIBUTIONS = ("normal", "lognormal", "uniform", "laplace")
_FP_CODECS = {"E4M3": E4M3, "E5M2": E5M2}
_LOGFMT = re.compile(r"^LogFMT-(\d+)$", re.IGNORECASE)


@dataclass(frozen=True)
class ErrorStats:
    codec: str
    distribution: str
    rounding: str
    seed: int
    blocks: int
    n_values: int
    mean_abs_error: float
    mean_rel_error: float
    max_rel_error: float
    bias: float
    bias_stderr: float

    def as_dict(self) -> dict:
        return asdict(self)


def sample_blocks(distribution: str, blocks: int, seed: int, sigma: float = 1.0) -> np.ndarray:
    """Draw ``blocks`` x 128 source values. Every distribution is sign-symmetric."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[0])
    shape = (blocks, TILE)
    if distribution == "normal":
        return rng.normal(0.0, sigma, shape)
    if distribution == "lognormal":
        signs = rng.choice([-1.0, 1.0], size=shape)
        return signs * rng.lognormal(0.0, sigma, shape)
    if distribution == "uniform":
        return rng.uniform(-sigma, sigma, shape)
    if distribution == "laplace":
        return rng.laplace(0.0, sigma, shape)
    raise ValueError(f"unknown distribution {distribution!r}; expected one of {DISTRIBUTIONS}")


def roundtrip(codec: str, x: np.ndarray, rounding: str = "nearest", rng=None) -> np.ndarray:
    """Quantize and dequantize ``x`` (blocks x 128) with the named codec."""
    fmt = _FP_CODECS.get(codec.upper())
    if fmt is not None:
        amax = np.max(np.abs(x), axis=-1, keepdims=True)
        scale = tile_scales(amax, fmt)
        return decode_array(encode_array(x / scale, fmt), fmt) * scale
    m = _LOGFMT.match(codec)
    if m is None:
        raise ValueError(f"unknown codec {codec!r}")
    n_bits = int(m.group(1))
    min_log, step, codes = encode_blocks(x, n_bits, rounding, rng)
    return decode_blocks(min_log, step, codes, n_bits)


def format_error_stats(
    distribution: str,
    codec: str,
    blocks: int = 1000,
    seed: int = 0,
    rounding: str = "nearest",
    sigma: float = 1.0,
) -> ErrorStats:
    """Per-element error summary of one codec on seeded blocks.

    Identical ``(distribution, blocks, seed, sigma)`` give identical source
    data whichever codec is measured. ``rounding`` only affects LogFMT.
    """
    x = sample_blocks(distribution, blocks, seed, sigma)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    y = roundtrip(codec, x, rounding, rng)
    diff = (y - x).ravel()
    ax = np.abs(x).ravel()
    nz = ax > 0
    rel = np.abs(diff[nz]) / ax[nz]
    return ErrorStats(
        codec=codec,
        distribution=distribution,
        rounding=rounding,
        seed=seed,
        blocks=blocks,
        n_values=int(diff.size),
        mean_abs_error=float(np.mean(np.abs(diff))),
        mean_rel_error=float(np.mean(rel)),
        max_rel_error=float(np.max(rel)),
        bias=float(np.mean(diff)),
        bias_stderr=float(np.std(diff, ddof=1) / np.sqrt(diff.size)),
    )
