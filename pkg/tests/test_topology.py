from __future__ import annotations

import networkx as nx
import pytest

from codesign_lab import topology as tp
from codesign_lab.errors import OddRadixError, RelationNotApplicableError, ZeroEndpointsError
from codesign_lab.topology import LinkLayer, Relation

US = 1e-6


def _counts(t):
    return (t.endpoints, t.switches, t.inter_switch_links)


def test_table_counts():
    assert _counts(tp.build_ft2(64)) == (2048, 96, 2048)
    assert _counts(tp.build_mpft(64, 8)) == (16384, 768, 16384)
    assert _counts(tp.build_ft3(64)) == (65536, 5120, 131072)


@pytest.mark.parametrize("radix", [2, 4, 6, 8, 16])
def test_ft2_graph_oracle(radix):
    g = tp.ft2_graph(radix)
    c = tp.graph_counts(g)
    t = tp.build_ft2(radix)
    assert (c["endpoints"], c["switches"], c["inter_switch_links"]) == _counts(t)
    assert c["max_switch_degree"] == radix
    assert nx.is_connected(g)


@pytest.mark.parametrize("radix", [2, 4, 8])
def test_mpft_graph_oracle(radix):
    g = tp.ft2_graph(radix, planes=3)
    c = tp.graph_counts(g)
    assert (c["endpoints"], c["switches"], c["inter_switch_links"]) == _counts(tp.build_mpft(radix, 3))
    assert nx.number_connected_components(g) == 3


@pytest.mark.parametrize("radix", [2, 4, 6, 8, 12])
def test_ft3_graph_oracle(radix):
    g = tp.ft3_graph(radix)
    c = tp.graph_counts(g)
    assert (c["endpoints"], c["switches"], c["inter_switch_links"]) == _counts(tp.build_ft3(radix))
    assert c["max_switch_degree"] == radix
    assert nx.is_connected(g)


@pytest.mark.parametrize("radix", [4, 8])
def test_hop_counts_from_graph(radix):
    for g, t in ((tp.ft2_graph(radix), tp.build_ft2(radix)), (tp.ft3_graph(radix), tp.build_ft3(radix))):
        hosts = [n for n, r in g.nodes(data="role") if r == "host"]
        src = hosts[0]
        dist = nx.single_source_shortest_path_length(g, src)
        # host-to-host path length minus the two host links
        assert max(dist[h] for h in hosts) - 2 == tp.max_switch_hops(t)


def test_radix_validation():
    for bad in (63, 1, 0):
        with pytest.raises(OddRadixError):
            tp.build_ft2(bad)
    with pytest.raises(OddRadixError):
        tp.build_ft3(7)


def test_cost():
    m = tp.CostModel()
    ft2 = tp.topology_cost(tp.build_ft2(64), m)
    assert ft2.total == pytest.approx(9e6, rel=0.01)
    assert ft2.per_endpoint == pytest.approx(4390, rel=0.02)
    assert tp.topology_cost(tp.build_mpft(64, 8), m).total == pytest.approx(72e6, rel=0.01)
    ft3 = tp.topology_cost(tp.build_ft3(64), m)
    assert ft3.total == pytest.approx(491e6, rel=0.01)
    assert ft3.per_endpoint == pytest.approx(7500, rel=0.02)
    assert tp.topology_cost(tp.REFERENCE_TOPOLOGIES["DF"], m).total == pytest.approx(1522e6, rel=0.03)
    with pytest.raises(ZeroEndpointsError):
        tp.topology_cost(tp.Topology(tp.TopologyKind.FT2, 0, 1, 1, 0))


def test_calibration_close_to_defaults():
    cal = tp.calibrate_cost_model()
    assert cal.switch_cost == pytest.approx(83009, rel=1e-4)
    assert cal.link_cost == pytest.approx(503.5, rel=1e-3)


def test_mpft_cost_per_endpoint_equals_ft2():
    m = tp.CostModel()
    a = tp.topology_cost(tp.build_ft2(32), m).per_endpoint
    b = tp.topology_cost(tp.build_mpft(32, 4), m).per_endpoint
    assert a == pytest.approx(b)


def test_latency_passthrough():
    ft2, mpft = tp.build_ft2(64), tp.build_mpft(64, 8)
    assert tp.path_latency(ft2, Relation.SAME_LEAF, LinkLayer.IB) / US == pytest.approx(2.8)
    assert tp.path_latency(ft2, Relation.CROSS_LEAF, LinkLayer.IB) / US == pytest.approx(3.7)
    assert tp.path_latency(ft2, Relation.SAME_LEAF, LinkLayer.ROCE) / US == pytest.approx(3.6)
    assert tp.path_latency(ft2, Relation.CROSS_LEAF, LinkLayer.ROCE) / US == pytest.approx(5.6)
    assert tp.path_latency(ft2, Relation.SAME_LEAF, LinkLayer.NVLINK) / US == pytest.approx(3.33)
    assert tp.path_latency(mpft, Relation.CROSS_PLANE, LinkLayer.IB) / US == pytest.approx(7.03)


def test_latency_not_applicable():
    with pytest.raises(RelationNotApplicableError):
        tp.path_latency(tp.build_ft2(64), Relation.CROSS_PLANE)
    with pytest.raises(RelationNotApplicableError):
        tp.path_latency(tp.build_ft2(64), Relation.CROSS_LEAF, LinkLayer.NVLINK)
    with pytest.raises(RelationNotApplicableError):
        tp.path_latency(tp.REFERENCE_TOPOLOGIES["SF"], Relation.SAME_LEAF)


def test_worst_case():
    assert tp.worst_case_latency(tp.build_ft2(64)) / US == pytest.approx(3.7)
    assert tp.worst_case_latency(tp.build_ft3(64)) / US == pytest.approx(4.6)
