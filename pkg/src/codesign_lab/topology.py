"""Fat-tree family construction, linear cost model and hop-latency lookup.

Counts follow the standard radix-k constructions:

* FT2 (leaf/spine): k leaves with k/2 host ports each, k/2 spines.
* FT3 (k-ary fat tree): k pods of k/2 edge + k/2 aggregation switches, (k/2)^2 cores.
* MPFT: ``planes`` independent FT2 networks; endpoints count NIC-plane
  attachments, so 8 planes of FT2(64) give 16,384 endpoints for 2,048 nodes.

"Links" means inter-switch links; host links are tracked separately and are
not costed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .errors import OddRadixError, RelationNotApplicableError, ZeroEndpointsError

US = 1e-6


class TopologyKind(enum.Enum):
    FT2 = "FT2"
    MPFT = "MPFT"
    FT3 = "FT3"
    REFERENCE = "REFERENCE"


@dataclass(frozen=True)
class Topology:
    kind: TopologyKind
    endpoints: int
    switches: int
    inter_switch_links: int
    endpoint_links: int
    planes: int = 1
    radix: int = 0
    name: str = ""

    @property
    def label(self) -> str:
        return self.name or self.kind.value


def _check_radix(radix: int) -> None:
    if not isinstance(radix, int) or radix < 2 or radix % 2:
        raise OddRadixError(f"radix must be an even integer >= 2, got {radix!r}")


def build_ft2(radix: int) -> Topology:
    _check_radix(radix)
    half = radix // 2
    endpoints = radix * half
    return Topology(
        TopologyKind.FT2,
        endpoints=endpoints,
        switches=radix + half,
        inter_switch_links=radix * half,
        endpoint_links=endpoints,
        radix=radix,
        name=f"FT2({radix})",
    )


def build_ft3(radix: int) -> Topology:
    _check_radix(radix)
    half = radix // 2
    endpoints = radix * half * half
    return Topology(
        TopologyKind.FT3,
        endpoints=endpoints,
        switches=radix * radix + half * half,
        inter_switch_links=2 * radix * half * half,
        endpoint_links=endpoints,
        radix=radix,
        name=f"FT3({radix})",
    )


def build_mpft(radix: int, planes: int) -> Topology:
    if not isinstance(planes, int) or planes < 1:
        raise ValueError(f"planes must be >= 1, got {planes!r}")
    ft2 = build_ft2(radix)
    return Topology(
        TopologyKind.MPFT,
        endpoints=planes * ft2.endpoints,
        switches=planes * ft2.switches,
        inter_switch_links=planes * ft2.inter_switch_links,
        endpoint_links=planes * ft2.endpoint_links,
        planes=planes,
        radix=radix,
        name=f"MPFT({radix}x{planes})",
    )


# Slim Fly and Dragonfly rows are published reference data, not constructed here.
REFERENCE_TOPOLOGIES = {
    "SF": Topology(TopologyKind.REFERENCE, 32_928, 1_568, 32_928, 32_928, name="SF"),
    "DF": Topology(TopologyKind.REFERENCE, 261_632, 16_352, 384_272, 261_632, name="DF"),
}


# ----------------------------------------------------------- explicit graphs


def ft2_graph(radix: int, planes: int = 1) -> nx.Graph:
    """Explicit leaf/spine graph (one component per plane). Node attr ``role``
    is ``host``, ``leaf`` or ``spine``."""
    _check_radix(radix)
    half = radix // 2
    g = nx.Graph()
    for p in range(planes):
        spines = [("spine", p, s) for s in range(half)]
        g.add_nodes_from(spines, role="spine")
        for leaf in range(radix):
            lf = ("leaf", p, leaf)
            g.add_node(lf, role="leaf")
            for h in range(half):
                host = ("host", p, leaf, h)
                g.add_node(host, role="host")
                g.add_edge(lf, host)
            for sp in spines:
                g.add_edge(lf, sp)
    return g


def ft3_graph(radix: int) -> nx.Graph:
    """Explicit k-ary fat tree. Roles: ``host``, ``edge``, ``agg``, ``core``."""
    _check_radix(radix)
    half = radix // 2
    g = nx.Graph()
    cores = [[("core", i, j) for j in range(half)] for i in range(half)]
    for row in cores:
        g.add_nodes_from(row, role="core")
    for pod in range(radix):
        aggs = [("agg", pod, a) for a in range(half)]
        edges = [("edge", pod, e) for e in range(half)]
        g.add_nodes_from(aggs, role="agg")
        g.add_nodes_from(edges, role="edge")
        for a, agg in enumerate(aggs):
            for core in cores[a]:
                g.add_edge(agg, core)
            for edge in edges:
                g.add_edge(agg, edge)
        for e, edge in enumerate(edges):
            for h in range(half):
                host = ("host", pod, e, h)
                g.add_node(host, role="host")
                g.add_edge(edge, host)
    return g


def graph_counts(g: nx.Graph) -> dict[str, int]:
    """Endpoint, switch and link counts plus the largest switch degree."""
    hosts = {n for n, r in g.nodes(data="role") if r == "host"}
    switches = [n for n in g.nodes if n not in hosts]
    host_links = sum(1 for u, v in g.edges if u in hosts or v in hosts)
    return {
        "endpoints": len(hosts),
        "switches": len(switches),
        "inter_switch_links": g.number_of_edges() - host_links,
        "endpoint_links": host_links,
        "max_switch_degree": max((g.degree(n) for n in switches), default=0),
    }


def max_switch_hops(t: Topology) -> int:
    """Worst-case inter-switch hops between two endpoints in one plane."""
    if t.kind in (TopologyKind.FT2, TopologyKind.MPFT):
        return 2
    if t.kind is TopologyKind.FT3:
        return 4
    raise RelationNotApplicableError(f"hop count undefined for {t.kind.value} reference rows")


# -------------------------------------------------------------------- cost


@dataclass(frozen=True)
class CostModel:
    switch_cost: float = 83_009.0
    link_cost: float = 503.5

    def __post_init__(self):
        if self.switch_cost < 0 or self.link_cost < 0:
            raise ValueError("costs must be non-negative")


# published (switches, links, total $) rows used for calibration
CALIBRATION_ROWS = {"FT2": (96, 2_048, 9e6), "FT3": (5_120, 131_072, 491e6)}


def calibrate_cost_model(rows: dict[str, tuple[int, int, float]] = CALIBRATION_ROWS) -> CostModel:
    """Least-squares (exact for two rows) per-switch and per-link prices."""
    a = np.array([[s, l] for s, l, _ in rows.values()], dtype=np.float64)
    y = np.array([c for _, _, c in rows.values()], dtype=np.float64)
    (switch, link), *_ = np.linalg.lstsq(a, y, rcond=None)
    return CostModel(float(switch), float(link))


@dataclass(frozen=True)
class CostResult:
    total: float
    per_endpoint: float


def topology_cost(t: Topology, m: CostModel = CostModel()) -> CostResult:
    if t.endpoints <= 0:
        raise ZeroEndpointsError(f"{t.label} has no endpoints")
    total = m.switch_cost * t.switches + m.link_cost * t.inter_switch_links
    return CostResult(total, total / t.endpoints)


# ----------------------------------------------------------------- latency


class Relation(enum.Enum):
    SAME_LEAF = "SAME_LEAF"
    CROSS_LEAF = "CROSS_LEAF"
    CROSS_PLANE = "CROSS_PLANE"


class LinkLayer(enum.Enum):
    IB = "IB"
    ROCE = "RoCE"
    NVLINK = "NVLink"


@dataclass(frozen=True)
class HopLatency:
    same_leaf: float
    cross_leaf: float | None = None

    def __post_init__(self):
        if self.cross_leaf is not None and self.cross_leaf < self.same_leaf:
            raise ValueError("cross-leaf latency below same-leaf latency")


# 64-byte CPU-side end-to-end latencies, seconds
DEFAULT_LATENCY = {
    LinkLayer.IB: HopLatency(2.8 * US, 3.7 * US),
    LinkLayer.ROCE: HopLatency(3.6 * US, 5.6 * US),
    LinkLayer.NVLINK: HopLatency(3.33 * US, None),
}


def path_latency(
    t: Topology,
    relation: Relation,
    link_layer: LinkLayer = LinkLayer.IB,
    table: dict[LinkLayer, HopLatency] = DEFAULT_LATENCY,
) -> float:
    """End-to-end latency for an endpoint pair in the given relation.

    Cross-plane traffic on MPFT is first forwarded inside the node over
    NVLink, then crosses leaves in the target plane.
    """
    relation = Relation(relation)
    link_layer = LinkLayer(link_layer)
    if t.kind is TopologyKind.REFERENCE:
        raise RelationNotApplicableError(f"no latency model for reference topology {t.label}")
    if relation is Relation.CROSS_PLANE:
        if t.kind is not TopologyKind.MPFT:
            raise RelationNotApplicableError(f"CROSS_PLANE needs a multi-plane topology, got {t.kind.value}")
        if link_layer is LinkLayer.NVLINK:
            raise RelationNotApplicableError("CROSS_PLANE is measured on a scale-out link layer")
        forward = table[LinkLayer.NVLINK].same_leaf
        return forward + path_latency(t, Relation.CROSS_LEAF, link_layer, table)
    entry = table[link_layer]
    if relation is Relation.SAME_LEAF:
        return entry.same_leaf
    if entry.cross_leaf is None:
        raise RelationNotApplicableError(f"{link_layer.value} has no cross-leaf latency")
    return entry.cross_leaf


def worst_case_latency(
    t: Topology, link_layer: LinkLayer = LinkLayer.IB, table: dict[LinkLayer, HopLatency] = DEFAULT_LATENCY
) -> float:
    """Latency estimate for the longest in-plane path.

    Same-leaf paths cross one switch and cross-leaf paths three, so each extra
    switch costs ``(cross_leaf - same_leaf) / 2``; FT3's worst path crosses five.
    """
    entry = table[LinkLayer(link_layer)]
    if entry.cross_leaf is None:
        raise RelationNotApplicableError(f"{LinkLayer(link_layer).value} has no cross-leaf latency")
    per_switch = (entry.cross_leaf - entry.same_leaf) / 2
    return entry.same_leaf + max_switch_hops(t) * per_switch
