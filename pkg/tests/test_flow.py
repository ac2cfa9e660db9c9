import itertools

import networkx as nx
import numpy as np
import pytest

from config import FlowSettings
from modules import generators
from modules.bounds import spectral_lower_bound
from modules.errors import CapacityOverflowError, DegenerateClusterError, InvalidNodeError
from modules.flow import FlowNetwork, _check_capacities, bisect, max_flow, metis_mqi_sample, mqi, recursion_depth
from modules.graph import Cluster, Graph, cluster_stats, is_connected_subset
from modules.scoring import GeneratorTag, ScoreKind
from tests.conftest import brute_force_min_quotient


def network(node_count, source, sink, arcs):
    net = FlowNetwork(node_count, source, sink)
    for tail, head, capacity in arcs:
        net.add_arc(tail, head, capacity)
    return net


def test_max_flow_small_network():
    net = network(4, 0, 3, [(0, 1, 3), (0, 2, 2), (1, 2, 1), (1, 3, 2), (2, 3, 3)])
    value, source_side = max_flow(net)
    assert value == 5
    assert source_side == {0}


def test_max_flow_matches_networkx():
    rng = np.random.default_rng(5)
    for trial in range(20):
        n = int(rng.integers(4, 16))
        arcs = [
            (u, v, int(rng.integers(1, 20)))
            for u in range(n)
            for v in range(n)
            if u != v and rng.random() < 0.3
        ]
        net = network(n, 0, n - 1, arcs)
        value, source_side = max_flow(net)

        reference = nx.DiGraph()
        reference.add_nodes_from(range(n))
        for tail, head, capacity in arcs:
            reference.add_edge(tail, head, capacity=capacity)
        expected, _ = nx.minimum_cut(reference, 0, n - 1)
        assert value == expected
        assert 0 in source_side and n - 1 not in source_side
        crossing = sum(capacity for tail, head, capacity in arcs if tail in source_side and head not in source_side)
        assert crossing == value


def test_max_flow_with_bottleneck():
    net = network(4, 0, 3, [(0, 1, 10), (1, 2, 1), (2, 3, 10)])
    value, source_side = max_flow(net)
    assert value == 1
    assert source_side == {0, 1}


def test_max_flow_unreachable_sink():
    value, source_side = max_flow(network(3, 0, 2, [(0, 1, 4)]))
    assert value == 0
    assert source_side == {0, 1}


def test_max_flow_matches_min_cut_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = 6
        arcs = [(u, v, int(rng.integers(1, 9))) for u in range(n) for v in range(n) if u != v and rng.random() < 0.4]
        value, _ = max_flow(network(n, 0, n - 1, arcs))
        inner = range(1, n - 1)
        best = min(
            sum(c for u, v, c in arcs if u in side and v not in side)
            for size in range(n - 1)
            for chosen in itertools.combinations(inner, size)
            for side in [{0, *chosen}]
        )
        assert value == best


def test_add_arc_validation():
    net = FlowNetwork(3, 0, 2)
    with pytest.raises(InvalidNodeError):
        net.add_arc(0, 3, 1)
    with pytest.raises(ValueError):
        net.add_arc(0, 1, -1)
    with pytest.raises(CapacityOverflowError):
        net.add_arc(0, 1, 2**63)
    with pytest.raises(InvalidNodeError):
        max_flow(FlowNetwork(2, 1, 1))


def test_reverse_capacity_makes_undirected_edge():
    net = FlowNetwork(3, 0, 2)
    net.add_arc(0, 1, 5)
    net.add_arc(2, 1, 3, 3)
    assert max_flow(net)[0] == 3


def test_bisect_barbell_cuts_the_bridge(barbell):
    split = bisect(barbell, seed=1)
    sides = {tuple(split.side_a.members.tolist()), tuple(split.side_b.members.tolist())}
    assert sides == {(0, 1, 2, 3, 4), (5, 6, 7, 8, 9)}
    assert split.cut == 1
    assert split.imbalance == 0.0
    assert not split.over_tolerance


def test_bisect_cycle_keeps_neighbours_together():
    split = bisect(generators.cycle(4), seed=0)
    assert split.cut == 2
    assert split.side_a.m_s == split.side_b.m_s == 1


def test_bisect_partitions_the_graph():
    graph = generators.planted_two_community(16, 0.7, 0.1, seed=2)
    split = bisect(graph, seed=4)
    a, b = set(split.side_a.members.tolist()), set(split.side_b.members.tolist())
    assert a and b and not a & b
    assert a | b == set(range(16))
    assert split.imbalance == pytest.approx(abs(split.side_a.vol_s - split.side_b.vol_s) / graph.total_volume)


def test_bisect_is_seeded():
    graph = generators.grid(12, 12)
    settings = FlowSettings(coarsest_size=16)
    first = bisect(graph, seed=9, settings=settings)
    second = bisect(graph, seed=9, settings=settings)
    assert first.side_a.members.tolist() == second.side_a.members.tolist()
    assert first.imbalance <= 0.1


def test_bisect_needs_two_nodes():
    with pytest.raises(DegenerateClusterError):
        bisect(Graph.from_edges([], node_count=1))


def test_mqi_keeps_a_clique(barbell):
    result = mqi(barbell, range(5))
    assert result.members.tolist() == [0, 1, 2, 3, 4]


def test_mqi_drops_the_bridge_node(barbell):
    result = mqi(barbell, range(6))
    assert result.members.tolist() == [0, 1, 2, 3, 4]
    assert (result.c_s, result.vol_s) == (1, 21)


def _half_volume_set(graph: Graph, rng: np.random.Generator) -> np.ndarray:
    """Random nodes added while the volume stays within half the graph."""
    half = graph.total_volume / 2
    members, volume = [], 0
    for u in rng.permutation(graph.node_count).tolist():
        if volume + graph.degree(u) <= half:
            members.append(u)
            volume += graph.degree(u)
    return np.sort(np.array(members, dtype=np.int64))


def test_mqi_finds_minimum_quotient_subset():
    rng = np.random.default_rng(12)
    checked, trial = 0, 0
    while checked < 25:
        trial += 1
        n = int(rng.integers(10, 15))
        if trial % 2:
            graph = generators.erdos_renyi(n, 0.35, seed=trial)
        else:
            graph = generators.planted_two_community(n, 0.7, 0.15, seed=trial)
        if np.any(graph.degrees == 0):
            continue
        members = _half_volume_set(graph, rng)
        start = cluster_stats(graph, members)
        result = mqi(graph, start)
        assert set(result.members.tolist()) <= set(members.tolist())
        assert result.c_s / result.vol_s == pytest.approx(brute_force_min_quotient(graph, members), abs=1e-12)
        assert result.c_s / result.vol_s <= start.c_s / start.vol_s
        checked += 1


def test_mqi_may_return_disconnected_set():
    graph = generators.two_triangles_to_hub()
    result = mqi(graph, range(6, 12))
    assert result.members.tolist() == list(range(6, 12))
    assert (result.c_s, result.vol_s) == (2, 14)
    assert not is_connected_subset(graph, result)


def test_mqi_rejects_empty(barbell):
    with pytest.raises(DegenerateClusterError):
        mqi(barbell, [])


def test_capacity_guard():
    cluster = Cluster(members=np.array([0]), n_s=1, m_s=0, c_s=2**40, vol_s=2**40)
    with pytest.raises(CapacityOverflowError):
        _check_capacities(cluster, 2**30)
    _check_capacities(Cluster(members=np.array([0]), n_s=1, m_s=0, c_s=3, vol_s=3), 3)


def test_recursion_depth():
    assert recursion_depth(100, 20) == 3
    assert recursion_depth(20, 20) == 0
    assert recursion_depth(21, 20) == 1


def test_sample_on_barbell(barbell):
    candidates = metis_mqi_sample(barbell, trials=3, seed=0)
    assert sorted(candidate.cluster.members.tolist() for candidate in candidates) == [
        [0, 1, 2, 3, 4],
        [5, 6, 7, 8, 9],
    ]
    for candidate in candidates:
        assert candidate.generator is GeneratorTag.MQI
        assert candidate.connected
        assert candidate.value(barbell, ScoreKind.CONDUCTANCE) == pytest.approx(1 / 21)
        assert candidate.params["trial"] == 0


def test_sample_is_sound_and_worker_independent(karate):
    settings = FlowSettings(min_recursion_size=8)
    one = metis_mqi_sample(karate, trials=4, seed=3, settings=settings, workers=1)
    three = metis_mqi_sample(karate, trials=4, seed=3, settings=settings, workers=3)
    assert [c.cluster.key for c in one] == [c.cluster.key for c in three]
    assert [c.params for c in one] == [c.params for c in three]
    keys = [c.cluster.key for c in one]
    assert len(keys) == len(set(keys))
    floor = spectral_lower_bound(karate).bound_any_size
    for candidate in one:
        assert 2 * candidate.cluster.vol_s <= karate.total_volume
        assert candidate.value(karate, ScoreKind.CONDUCTANCE) >= floor - 1e-9


def test_sample_validation(barbell):
    with pytest.raises(ValueError):
        metis_mqi_sample(barbell, trials=0)
    assert metis_mqi_sample(Graph.from_edges([], node_count=1), trials=2) == []
