"""Acceptance criteria 1-10.

Each criterion prints one ``ACCEPTANCE <n> PASS|FAIL`` line (collected into
the pytest terminal summary, or printed directly when run as a script).
Tolerances are pinned to the published anchors.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from codesign_lab import cli, epmodel, memcalc
from codesign_lab import topology as tp
from codesign_lab.lowprec import E4M3, E5M2, format_error_stats, logfmt_decode, logfmt_encode, simulated_gemm
from codesign_lab.lowprec.formats import all_codes, decode_array, encode_array
from codesign_lab.lowprec.fp22 import align_truncate_sum, group_error_bound
from codesign_lab.lowprec.logfmt import logfmt_requantize

GB = epmodel.GB
US = 1e-6
RESULTS: list[str] = []


class Checks:
    def __init__(self):
        self.failed: list[str] = []
        self.notes: list[str] = []

    def __call__(self, ok: bool, what: str) -> None:
        if not ok:
            self.failed.append(what)
        self.notes.append(what)


def _record(n: int, title: str, c: Checks) -> None:
    status = "PASS" if not c.failed else "FAIL"
    detail = "; ".join(c.failed) if c.failed else "; ".join(c.notes)
    line = f"ACCEPTANCE {n:>2} {status}  {title} :: {detail}"
    RESULTS.append(line)
    print(line)
    assert not c.failed, line


def _near(x, target, tol):
    return abs(x - target) <= tol


# ------------------------------------------------------------------ 1


def test_criterion_01_kv_cache_table():
    m = memcalc.builtin_models()
    v3, qwen, llama = m["DeepSeek-V3"], m["Qwen-2.5-72B"], m["LLaMA-3.1-405B"]
    c = Checks()
    for cfg, want in ((v3, 70272), (qwen, 327680), (llama, 516096)):
        got = memcalc.kv_bytes_per_token(cfg, 2)
        c(got == want, f"{cfg.name} {got} B (want {want})")
    r_q = memcalc.kv_multiplier(qwen, v3)
    r_l = memcalc.kv_multiplier(llama, v3)
    c(_near(r_q, 4.66, 0.01), f"Qwen multiplier {r_q:.4f} (want 4.66+-0.01)")
    c(_near(r_l, 7.28, 0.01), f"LLaMA multiplier {r_l:.4f} (want 7.28+-0.01)")
    _record(1, "KV cache bytes and multipliers", c)


# ------------------------------------------------------------------ 2


def test_criterion_02_tpot_bound():
    s = epmodel.EpScenario()
    c = Checks()
    t50 = epmodel.alltoall_time(s, 50 * GB) / US
    t900 = epmodel.alltoall_time(s, 900 * GB) / US
    c(_near(t50, 120.96, 0.01), f"comm@50 {t50:.4f} us")
    c(_near(t900, 6.72, 0.01), f"comm@900 {t900:.4f} us")
    b50 = epmodel.tpot_bound(s, 50 * GB)
    b900 = epmodel.tpot_bound(s, 900 * GB)
    c(_near(b50.per_layer / US, 241.92, 0.01), f"per-layer {b50.per_layer / US:.4f} us")
    c(round(b50.tpot * 1e3, 2) == 14.76, f"TPOT@50 {b50.tpot * 1e3:.4f} ms")
    c(b50.tokens_per_second_floor == 67, f"TPS@50 {b50.tokens_per_second_floor}")
    c(_near(b900.tpot * 1e3, 0.82, 0.005), f"TPOT@900 {b900.tpot * 1e3:.5f} ms")
    c(_near(b900.tokens_per_second, 1200, 25), f"TPS@900 {b900.tokens_per_second:.1f}")
    _record(2, "all-to-all time and TPOT bound", c)


# ------------------------------------------------------------------ 3


def test_criterion_03_topology_table():
    c = Checks()
    cost = tp.CostModel()
    rows = [
        (tp.build_ft2(64), (2048, 96, 2048), 9e6, 4390),
        (tp.build_mpft(64, 8), (16384, 768, 16384), 72e6, 4390),
        (tp.build_ft3(64), (65536, 5120, 131072), 491e6, 7500),
    ]
    for t, counts, total, per in rows:
        got = (t.endpoints, t.switches, t.inter_switch_links)
        c(got == counts, f"{t.label} counts {got}")
        r = tp.topology_cost(t, cost)
        c(abs(r.total / total - 1) <= 0.01, f"{t.label} ${r.total / 1e6:.2f}M")
        c(abs(r.per_endpoint / per - 1) <= 0.02, f"{t.label} ${r.per_endpoint / 1e3:.3f}k/endpoint")
    df = tp.topology_cost(tp.REFERENCE_TOPOLOGIES["DF"], cost)
    c(abs(df.total / 1522e6 - 1) <= 0.03, f"DF ${df.total / 1e6:.1f}M")
    _record(3, "fat-tree counts and cost model", c)


# ------------------------------------------------------------------ 4


def test_criterion_04_training_flops():
    m = memcalc.builtin_models()
    c = Checks()
    for name, published in (("DeepSeek-V2", 155), ("DeepSeek-V3", 250), ("Qwen-2.5-72B", 394), ("LLaMA-3.1-405B", 2448)):
        fb = memcalc.train_flops_per_token(m[name], 4096)
        parts = (fb.attention_proj, fb.attention_core, fb.dense_ffn, fb.moe_ffn)
        c(math.isclose(sum(parts), fb.total) and all(p >= 0 for p in parts), f"{name} breakdown sums")
        c(abs(fb.gflops / published - 1) <= 0.20, f"{name} {fb.gflops:.1f} vs {published} GFLOPs ({fb.gflops / published - 1:+.1%})")
    table = cli.run("flops").get("train_flops")
    c(len(table.rows) == 4 and "moe_ffn_gflops" in table.columns, "CLI emits per-component breakdown")
    _record(4, "training FLOPs per token", c)


# ------------------------------------------------------------------ 5


def test_criterion_05_mtp():
    c = Checks()
    c(epmodel.mtp_speedup(0.8) == 1.8, f"0.8 -> {epmodel.mtp_speedup(0.8)!r}")
    c(epmodel.mtp_speedup(0.9) == 1.9, f"0.9 -> {epmodel.mtp_speedup(0.9)!r}")
    _record(5, "MTP speedup", c)


# ------------------------------------------------------------------ 6


def test_criterion_06_routing():
    from test_epmodel import SMALL_POLICIES, _oracle

    c = Checks()
    t0 = time.perf_counter()
    p = epmodel.RoutingPolicy()
    sim = epmodel.routing_sim(p, 100_000, seed=0, distribution="uniform")
    c(sim.p_limited_exceeds == 0.0 and max(i for i, h in enumerate(sim.hist_limited) if h) <= 4, "node-limited M<=4 in all trials")
    exact = 8 * (1 - math.comb(224, 8) / math.comb(256, 8))
    z = (sim.mean_m_unrestricted - exact) / sim.stderr_m_unrestricted
    c(abs(z) < 3, f"unrestricted mean {sim.mean_m_unrestricted:.5f} vs exact {exact:.5f} (z={z:+.2f})")
    rng = np.random.default_rng(0)
    n_inst = mismatches = 0
    for pol in SMALL_POLICIES:
        for _ in range(10):
            s = rng.integers(0, 5, pol.n_experts).astype(float)
            r = epmodel.node_limited_route(s, pol)
            chosen, m = _oracle(s, pol)
            n_inst += 1
            mismatches += set(r.experts) != chosen or r.m != m
    c(mismatches == 0, f"brute force agrees on {n_inst} instances (n_experts<=16)")
    dt = time.perf_counter() - t0
    c(dt < 30, f"runtime {dt:.1f}s")
    _record(6, "node-limited routing", c)


# ------------------------------------------------------------------ 7


def test_criterion_07_codecs():
    c = Checks()
    for fmt in (E4M3, E5M2):
        codes = all_codes(fmt)
        vals = decode_array(codes, fmt)
        nan = np.isnan(vals)
        ok = np.array_equal(encode_array(vals[~nan], fmt), codes[~nan]) and np.all(
            encode_array(vals[nan], fmt) == fmt.canonical_nan
        )
        c(bool(ok) and codes.size == 256, f"{fmt.name} all 256 codes round-trip")

    rng = np.random.default_rng(0)
    exact = 0
    worst_range = 0.0
    for _ in range(10_000):
        n_bits = int(rng.choice([4, 8, 10]))
        x = rng.lognormal(0, 4, 128) * rng.choice([-1, 1], 128)
        blk = logfmt_encode(x, n_bits)
        pts = rng.choice(blk.grid(), 128) * rng.choice([-1, 1], 128)
        exact += np.array_equal(logfmt_decode(logfmt_requantize(pts, blk)), pts)
        mags = np.abs(logfmt_decode(blk))
        worst_range = max(worst_range, mags.max() / mags[mags > 0].min())
    c(exact == 10_000, f"grid points exact on {exact}/10000 blocks")
    c(worst_range <= 2.0**32 * (1 + 1e-12), f"max in-block range 2^{math.log2(worst_range):.3f}")

    rel = {k: format_error_stats("lognormal", k, 1000, 0).mean_rel_error for k in ("LogFMT-10", "LogFMT-8", "E4M3")}
    c(
        rel["LogFMT-10"] < rel["LogFMT-8"] < rel["E4M3"],
        "mean rel err LogFMT-10 {:.4g} < LogFMT-8 {:.4g} < E4M3 {:.4g}".format(*rel.values()),
    )

    # bias on positive data, where signed errors cannot cancel
    x = np.abs(np.random.default_rng(1).lognormal(0, 1, (1000, 128)))
    from codesign_lab.lowprec.logfmt import decode_blocks, encode_blocks

    srng = np.random.default_rng(2)
    y = decode_blocks(*encode_blocks(x, 8, "stochastic", srng), 8)
    d = (y - x).ravel()
    z = d.mean() / (d.std(ddof=1) / math.sqrt(d.size))
    c(abs(z) < 3, f"stochastic bias z={z:+.2f}")
    _record(7, "FP8 and LogFMT codec properties", c)


# ------------------------------------------------------------------ 8


def test_criterion_08_fp22():
    c = Checks()
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    vals = decode_array(all_codes(E4M3), E4M3)
    vals = vals[np.isfinite(vals)]
    prods = rng.choice(vals, (10_000, 32)) * rng.choice(vals, (10_000, 32))
    sums, _ = align_truncate_sum(prods)
    worst = 0.0
    for p, s in zip(prods, sums):
        err = abs(float(s) - math.fsum(p))
        worst = max(worst, err / group_error_bound(p))
    c(worst <= 1.0, f"10^4 groups: max error / bound = {worst:.3f}")

    a, b = rng.normal(size=(128, 128)), rng.normal(size=(128, 128))
    r = simulated_gemm(a, b)
    ratio = float(np.max(np.abs(r.result - r.reference) / r.error_bound))
    c(ratio <= 1.0, f"128^3 GEMM within composed bound (max ratio {ratio:.3f})")

    ident = simulated_gemm(np.eye(128), b)
    c(np.array_equal(ident.result, ident.reference), "identity-row GEMM exact")
    dt = time.perf_counter() - t0
    c(dt < 60, f"runtime {dt:.1f}s")
    _record(8, "FP22 accumulation", c)


# ------------------------------------------------------------------ 9


def test_criterion_09_determinism():
    c = Checks()
    for cmd in cli.COMMANDS:
        a = cli.run(cmd, seed=0).to_json()
        b = cli.run(cmd, seed=0).to_json()
        c(a == b, f"{cmd} byte-identical")
    _record(9, "report determinism", c)


# ------------------------------------------------------------------ 10


def test_criterion_10_latency():
    c = Checks()
    ft2, mpft = tp.build_ft2(64), tp.build_mpft(64, 8)
    R, L = tp.Relation, tp.LinkLayer
    cases = [
        (L.IB, R.SAME_LEAF, 2.8),
        (L.IB, R.CROSS_LEAF, 3.7),
        (L.ROCE, R.SAME_LEAF, 3.6),
        (L.ROCE, R.CROSS_LEAF, 5.6),
        (L.NVLINK, R.SAME_LEAF, 3.33),
    ]
    for layer, rel, want in cases:
        got = tp.path_latency(ft2, rel, layer) / US
        c(math.isclose(got, want, rel_tol=1e-12), f"{layer.value} {rel.value} {got:.4g} us")
    cp = tp.path_latency(mpft, R.CROSS_PLANE, L.IB) / US
    c(math.isclose(cp, 7.03, rel_tol=1e-12), f"MPFT cross-plane {cp:.4g} us")
    _record(10, "hop latency passthrough", c)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
