"""codesign-lab command line: ``codesign-lab <kv|flops|tpot|route|topo|quant>``.

Exit status: 0 success, 2 config error, 1 internal error.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import epmodel, memcalc, topology
from .errors import CodesignError, ConfigError, UnknownPresetError
from .lowprec import fp22
from .lowprec.formats import E4M3, E5M2
from .lowprec.stats import DISTRIBUTIONS, format_error_stats, sample_blocks
from .report import Report
from .tomlio import load_toml

COMMANDS = ("kv", "flops", "tpot", "route", "topo", "quant")
GB = epmodel.GB
US = 1e-6


# ------------------------------------------------------------------ config


def default_config() -> dict:
    return load_toml(resources.files("codesign_lab.data").joinpath("defaults.toml").read_text())


def load_config(path: str | Path | None = None, seed: int | None = None) -> dict:
    """Defaults deep-merged with the user file; ``seed`` overrides every seed."""
    cfg = default_config()
    if path is not None:
        cfg = memcalc.deep_merge(cfg, load_toml(path))
    if seed is not None:
        for section in ("route", "quant"):
            cfg.setdefault(section, {})["seed"] = seed
    return cfg


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError("expected a table", name)
    return sec


def _int(sec: dict, key: str, where: str, lo: int = 0) -> int:
    v = sec.get(key)
    if not isinstance(v, int) or isinstance(v, bool) or v < lo:
        raise ConfigError(f"expected an integer >= {lo}, got {v!r}", f"{where}.{key}")
    return v


def _num(sec: dict, key: str, where: str, positive: bool = True) -> float:
    v = sec.get(key)
    if not isinstance(v, (int, float)) or isinstance(v, bool) or (positive and v <= 0):
        raise ConfigError(f"expected a {'positive ' if positive else ''}number, got {v!r}", f"{where}.{key}")
    return float(v)


def _list(sec: dict, key: str, where: str) -> list:
    v = sec.get(key, [])
    if not isinstance(v, list):
        raise ConfigError("expected an array", f"{where}.{key}")
    return v


def _models(cfg: dict, names: list, where: str) -> list[memcalc.ModelConfig]:
    presets = memcalc.preset_dicts()
    overrides = _section(cfg, "models")
    out = []
    for i, name in enumerate(names):
        if not isinstance(name, str):
            raise ConfigError("model names must be strings", f"{where}[{i}]")
        if name not in presets and name not in overrides:
            raise UnknownPresetError(f"no preset or [models] entry named {name!r}", f"{where}[{i}]")
        out.append(memcalc.resolve_model(name, overrides.get(name), presets))
    return out


def _ep(cfg: dict) -> epmodel.EpScenario:
    sec = _section(cfg, "ep")
    return epmodel.EpScenario(
        tokens_per_device=_int(sec, "tokens_per_device", "ep"),
        hidden_dim=_int(sec, "hidden_dim", "ep", 1),
        dispatch_bytes=_num(sec, "dispatch_bytes", "ep"),
        combine_bytes=_num(sec, "combine_bytes", "ep"),
        fanout=_int(sec, "fanout", "ep", 1),
        layers=_int(sec, "layers", "ep", 1),
    )


def _bandwidth(cfg: dict) -> epmodel.BandwidthModel:
    sec = _section(cfg, "bandwidth")
    return epmodel.BandwidthModel(
        nvlink_effective=_num(sec, "nvlink_effective_gb_per_s", "bandwidth") * GB,
        nic_effective=_num(sec, "nic_effective_gb_per_s", "bandwidth") * GB,
        nic_peak=_num(sec, "nic_peak_gb_per_s", "bandwidth") * GB,
    )


def _routing(cfg: dict) -> epmodel.RoutingPolicy:
    sec = _section(cfg, "routing")
    kw = {k: _int(sec, k, "routing", 1) for k in ("n_experts", "n_groups", "experts_per_group", "top_k", "max_groups")}
    try:
        score = epmodel.GroupScore(sec.get("group_score", "SUM_TOP2"))
    except ValueError:
        raise ConfigError(f"unknown group score {sec.get('group_score')!r}", "routing.group_score") from None
    return epmodel.RoutingPolicy(group_score=score, **kw)


# ---------------------------------------------------------------- commands


def cmd_kv(cfg: dict) -> Report:
    sec = _section(cfg, "kv")
    bpe = _int(sec, "bytes_per_element", "kv", 1)
    models = _models(cfg, _list(sec, "models", "kv"), "kv.models")
    base_name = sec.get("baseline")
    base = None
    if models:
        if base_name is None:
            base = models[0]
        else:
            base = _models(cfg, [base_name], "kv.baseline")[0]
    rep = Report("kv", {"kv": sec, "models": {m.name: m.to_dict() for m in models}})
    t = rep.table("kv_cache", ["model", "attention", "kv_bytes_per_token", "kv_kb_per_token", "multiplier_x"])
    for m in models:
        b = memcalc.kv_bytes_per_token(m, bpe)
        t.add(
            model=m.name,
            attention=m.attention.kind.value,
            kv_bytes_per_token=b,
            kv_kb_per_token=b / 1000,
            multiplier_x=memcalc.kv_multiplier(m, base, bpe),
        )
    return rep


def cmd_flops(cfg: dict) -> Report:
    sec = _section(cfg, "flops")
    seq = _int(sec, "seq_len", "flops", 1)
    models = _models(cfg, _list(sec, "models", "flops"), "flops.models")
    rep = Report("flops", {"flops": sec, "models": {m.name: m.to_dict() for m in models}})
    t = rep.table(
        "train_flops",
        [
            "model",
            "gflops_per_token",
            "attention_proj_gflops",
            "attention_core_gflops",
            "dense_ffn_gflops",
            "moe_ffn_gflops",
        ],
    )
    for m in models:
        fb = memcalc.train_flops_per_token(m, seq)
        t.add(
            model=m.name,
            gflops_per_token=fb.gflops,
            attention_proj_gflops=fb.attention_proj / 1e9,
            attention_core_gflops=fb.attention_core / 1e9,
            dense_ffn_gflops=fb.dense_ffn / 1e9,
            moe_ffn_gflops=fb.moe_ffn / 1e9,
        )
    return rep


def cmd_tpot(cfg: dict) -> Report:
    ep = _ep(cfg)
    sec = _section(cfg, "tpot")
    bws = _list(sec, "bandwidths_gb_per_s", "tpot")
    rates = _list(sec, "mtp_accept_rates", "tpot")
    rep = Report("tpot", {"ep": _section(cfg, "ep"), "tpot": sec})
    t = rep.table(
        "tpot_bound",
        [
            "bandwidth_gb_per_s",
            "comm_time_us",
            "per_layer_us",
            "layers",
            "tpot_ms",
            "tokens_per_s",
            "tokens_per_s_floor",
        ],
    )
    for i, bw in enumerate(bws):
        if not isinstance(bw, (int, float)) or bw <= 0:
            raise ConfigError(f"bandwidth must be positive, got {bw!r}", f"tpot.bandwidths_gb_per_s[{i}]")
        b = epmodel.tpot_bound(ep, bw * GB)
        t.add(
            bandwidth_gb_per_s=float(bw),
            comm_time_us=b.comm_time / US,
            per_layer_us=b.per_layer / US,
            layers=ep.layers,
            tpot_ms=b.tpot * 1e3,
            tokens_per_s=b.tokens_per_second,
            tokens_per_s_floor=b.tokens_per_second_floor,
        )
    mt = rep.table("mtp", ["accept_rate", "tps_multiplier_x"])
    for i, r in enumerate(rates):
        if not isinstance(r, (int, float)) or not 0 <= r <= 1:
            raise ConfigError(f"acceptance rate must be in [0, 1], got {r!r}", f"tpot.mtp_accept_rates[{i}]")
        mt.add(accept_rate=float(r), tps_multiplier_x=epmodel.mtp_speedup(r))
    return rep


def cmd_route(cfg: dict) -> Report:
    policy = _routing(cfg)
    bw = _bandwidth(cfg)
    ep = _ep(cfg)
    sec = _section(cfg, "route")
    trials = _int(sec, "trials", "route", 1)
    seed = _int(sec, "seed", "route")
    dist = sec.get("distribution", "uniform")
    if dist not in epmodel.SCORE_DISTRIBUTIONS:
        raise ConfigError(f"unknown distribution {dist!r}", "route.distribution")
    sim = epmodel.routing_sim(policy, trials, seed, dist)
    rep = Report(
        "route",
        {"routing": _section(cfg, "routing"), "route": sec, "bandwidth": _section(cfg, "bandwidth"), "ep": _section(cfg, "ep")},
        seeds={"route": seed},
    )
    h = rep.table("m_histogram", ["m_nodes", "unrestricted_trials", "node_limited_trials"])
    for m, (u, lim) in enumerate(zip(sim.hist_unrestricted, sim.hist_limited)):
        h.add(m_nodes=m, unrestricted_trials=u, node_limited_trials=lim)

    # one token copy over IB: hidden_dim elements at dispatch precision
    t_ib = ep.hidden_dim * ep.dispatch_bytes / bw.nic_effective
    s = rep.table("summary", ["metric", "value"])
    rows = [
        ("trials", sim.trials),
        ("mean_m_unrestricted", sim.mean_m_unrestricted),
        ("stderr_m_unrestricted", sim.stderr_m_unrestricted),
        ("exact_mean_m_uniform", epmodel.expected_groups_uniform(policy)),
        ("mean_m_node_limited", sim.mean_m_limited),
        ("stderr_m_node_limited", sim.stderr_m_limited),
        ("p_m_exceeds_max_groups", sim.p_limited_exceeds),
        ("mean_ib_reduction_x", sim.mean_reduction_limited),
        ("ib_time_per_copy_us", t_ib / US),
        ("ib_time_naive_us", policy.top_k * t_ib / US),
        ("ib_time_dedup_mean_us", sim.mean_m_limited * t_ib / US),
        ("scale_up_to_out_bandwidth_x", bw.scale_up_to_out_ratio),
    ]
    for k, v in rows:
        s.add(metric=k, value=v)
    return rep


def _topologies(cfg: dict) -> list[topology.Topology]:
    sec = _section(cfg, "topo")
    out = []
    for i, entry in enumerate(_list(sec, "topologies", "topo")):
        where = f"topo.topologies[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError("expected a table", where)
        kind = entry.get("kind")
        radix = entry.get("radix")
        if not isinstance(radix, int) or isinstance(radix, bool) or radix < 2 or radix % 2:
            raise ConfigError(f"radix must be an even integer >= 2 (parity check failed for {radix!r})", f"{where}.radix")
        if kind == "FT2":
            out.append(topology.build_ft2(radix))
        elif kind == "FT3":
            out.append(topology.build_ft3(radix))
        elif kind == "MPFT":
            planes = _int(entry, "planes", where, 1)
            out.append(topology.build_mpft(radix, planes))
        else:
            raise ConfigError(f"unknown topology kind {kind!r}", f"{where}.kind")
    for i, name in enumerate(_list(sec, "reference", "topo")):
        if name not in topology.REFERENCE_TOPOLOGIES:
            raise UnknownPresetError(f"no reference topology {name!r}", f"topo.reference[{i}]")
        out.append(topology.REFERENCE_TOPOLOGIES[name])
    return out


def _latency_table(sec: dict) -> dict:
    lat = sec.get("latency_us", {})
    table = dict(topology.DEFAULT_LATENCY)
    for name, entry in lat.items():
        try:
            layer = topology.LinkLayer(name)
        except ValueError:
            raise ConfigError(f"unknown link layer {name!r}", f"topo.latency_us.{name}") from None
        same = _num(entry, "same_leaf", f"topo.latency_us.{name}")
        cross = entry.get("cross_leaf")
        if cross is not None:
            cross = _num(entry, "cross_leaf", f"topo.latency_us.{name}")
            if cross < same:
                raise ConfigError("cross_leaf below same_leaf", f"topo.latency_us.{name}.cross_leaf")
            cross *= US
        table[layer] = topology.HopLatency(same * US, cross)
    return table


def cmd_topo(cfg: dict) -> Report:
    sec = _section(cfg, "topo")
    topos = _topologies(cfg)
    cost_sec = sec.get("cost", {})
    cost = topology.CostModel(
        _num(cost_sec, "switch_cost", "topo.cost", positive=False),
        _num(cost_sec, "link_cost", "topo.cost", positive=False),
    )
    table = _latency_table(sec)
    layers = []
    for i, name in enumerate(_list(sec, "link_layers", "topo")):
        try:
            layers.append(topology.LinkLayer(name))
        except ValueError:
            raise ConfigError(f"unknown link layer {name!r}", f"topo.link_layers[{i}]") from None

    rep = Report("topo", {"topo": sec})
    t = rep.table(
        "topologies",
        [
            "topology",
            "kind",
            "endpoints",
            "switches",
            "inter_switch_links",
            "cost_musd",
            "cost_per_endpoint_kusd",
        ],
    )
    for tp in topos:
        c = topology.topology_cost(tp, cost)
        t.add(
            topology=tp.label,
            kind=tp.kind.value,
            endpoints=tp.endpoints,
            switches=tp.switches,
            inter_switch_links=tp.inter_switch_links,
            cost_musd=c.total / 1e6,
            cost_per_endpoint_kusd=c.per_endpoint / 1e3,
        )

    lt = rep.table("latency", ["topology", "link_layer", "relation", "latency_us"])
    for tp in topos:
        if tp.kind is topology.TopologyKind.REFERENCE:
            continue
        for layer in layers:
            for rel in topology.Relation:
                try:
                    v = topology.path_latency(tp, rel, layer, table)
                except CodesignError:
                    continue
                lt.add(topology=tp.label, link_layer=layer.value, relation=rel.value, latency_us=v / US)
    wt = rep.table("worst_case", ["topology", "link_layer", "max_switch_hops", "est_latency_us"])
    for tp in topos:
        if tp.kind is topology.TopologyKind.REFERENCE:
            continue
        for layer in layers:
            if table[layer].cross_leaf is None:
                continue
            wt.add(
                topology=tp.label,
                link_layer=layer.value,
                max_switch_hops=topology.max_switch_hops(tp),
                est_latency_us=topology.worst_case_latency(tp, layer, table) / US,
            )
    return rep


def cmd_quant(cfg: dict) -> Report:
    sec = _section(cfg, "quant")
    seed = _int(sec, "seed", "quant")
    blocks = _int(sec, "blocks", "quant", 1)
    dist = sec.get("distribution", "lognormal")
    if dist not in DISTRIBUTIONS:
        raise ConfigError(f"unknown distribution {dist!r}", "quant.distribution")
    sigma = _num(sec, "sigma", "quant")
    roundings = _list(sec, "rounding", "quant") or ["nearest"]
    for i, r in enumerate(roundings):
        if r not in ("nearest", "stochastic"):
            raise ConfigError(f"unknown rounding {r!r}", f"quant.rounding[{i}]")
    rep = Report("quant", {"quant": sec}, seeds={"quant": seed})
    t = rep.table(
        "codec_error",
        ["codec", "rounding", "n_values", "mean_abs_error", "mean_rel_error", "max_rel_error", "bias", "bias_stderr"],
    )
    for i, codec in enumerate(_list(sec, "codecs", "quant")):
        is_log = isinstance(codec, str) and codec.lower().startswith("logfmt-")
        for r in roundings if is_log else ["nearest"]:
            try:
                st = format_error_stats(dist, codec, blocks, seed, r, sigma)
            except ValueError as exc:
                raise ConfigError(str(exc), f"quant.codecs[{i}]") from None
            t.add(
                codec=codec,
                rounding=r,
                n_values=st.n_values,
                mean_abs_error=st.mean_abs_error,
                mean_rel_error=st.mean_rel_error,
                max_rel_error=st.max_rel_error,
                bias=st.bias,
                bias_stderr=st.bias_stderr,
            )

    g = sec.get("gemm")
    if g:
        dims = {k: _int(g, k, "quant.gemm", 1) for k in ("m", "n", "k")}
        for k, v in dims.items():
            if v % 128:
                raise ConfigError("must be a multiple of 128", f"quant.gemm.{k}")
        fmt = {"E4M3": E4M3, "E5M2": E5M2}.get(g.get("format", "E4M3"))
        if fmt is None:
            raise ConfigError(f"unknown format {g.get('format')!r}", "quant.gemm.format")
        gdist = g.get("distribution", "normal")
        if gdist not in DISTRIBUTIONS:
            raise ConfigError(f"unknown distribution {gdist!r}", "quant.gemm.distribution")
        # reuse the block sampler with distinct seeds for each operand
        a = sample_blocks(gdist, dims["m"] * dims["k"] // 128, seed + 1, sigma).reshape(dims["m"], dims["k"])
        b = sample_blocks(gdist, dims["k"] * dims["n"] // 128, seed + 2, sigma).reshape(dims["k"], dims["n"])
        res = fp22.simulated_gemm(a, b, fmt)
        full = a @ b
        gt = rep.table("fp22_gemm", ["metric", "value"])
        rows = [
            ("shape", f"{dims['m']}x{dims['n']}x{dims['k']}"),
            ("format", fmt.name),
            ("max_abs_error_vs_quantized_exact", res.max_abs_error),
            ("mean_abs_error_vs_quantized_exact", res.mean_abs_error),
            ("max_error_bound", float(res.error_bound.max())),
            ("within_bound", bool(np.all(np.abs(res.result - res.reference) <= res.error_bound))),
            ("rel_frobenius_error_vs_unquantized", float(np.linalg.norm(res.result - full) / np.linalg.norm(full))),
        ]
        for k, v in rows:
            gt.add(metric=k, value=v)
        rep.seeds["quant_gemm_a"] = seed + 1
        rep.seeds["quant_gemm_b"] = seed + 2
    return rep


HANDLERS = {
    "kv": cmd_kv,
    "flops": cmd_flops,
    "tpot": cmd_tpot,
    "route": cmd_route,
    "topo": cmd_topo,
    "quant": cmd_quant,
}


def run(command: str, config: str | Path | None = None, seed: int | None = None) -> Report:
    cfg = load_config(config, seed)
    return HANDLERS[command](cfg)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="codesign-lab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="TOML config merged over the shipped defaults")
    p.add_argument("--json", type=Path, help="write the machine-readable report here ('-' for stdout)")
    p.add_argument("--seed", type=int, help="override every seed in the config")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rep = run(args.command, args.config, args.seed)
    except ConfigError as exc:
        print(f"error [{exc.code}] {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and map to exit 1
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.json is not None and str(args.json) == "-":
        sys.stdout.write(rep.to_json())
        return 0
    sys.stdout.write(rep.to_text())
    if args.json is not None:
        args.json.write_text(rep.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
