import itertools
from fractions import Fraction

import numpy as np
import pytest

from config import LocalSpectralSettings
from modules import generators
from modules.bounds import spectral_lower_bound
from modules.errors import DegenerateClusterError, InvalidNodeError
from modules.graph import Graph, is_connected_subset
from modules.local_spectral import (
    DiffusionVector,
    choose_seeds,
    default_epsilon_grid,
    local_cluster,
    local_spectral_sample,
    ppr_push,
    refinement_profile,
    sweep,
    sweep_ordering,
)
from modules.scoring import GeneratorTag, ScoreKind, score
from tests.conftest import exact_ppr


def test_no_push_when_seed_is_below_tolerance(k4):
    dv = ppr_push(k4, 0, alpha=0.1, epsilon=0.5)
    assert dv.pushes == 0
    assert dv.support == []
    assert dv.r == {0: 1.0}
    with pytest.raises(DegenerateClusterError):
        sweep(k4, dv)
    assert local_cluster(k4, 0, [0.1], [0.5]) == []


def test_single_edge_converges_to_closed_form():
    graph = Graph.from_edges([(0, 1)])
    dv = ppr_push(graph, 0, alpha=0.5, epsilon=1e-9)
    assert dv.dense(2) == pytest.approx([0.75, 0.25], abs=1e-8)


def test_isolated_seed_keeps_all_mass():
    graph = Graph.from_edges([(1, 2)], node_count=3)
    dv = ppr_push(graph, 0, alpha=0.2, epsilon=0.01)
    assert dv.p == {0: 1.0}
    assert dv.pushes == 0


def test_error_bounded_by_residual(karate):
    exact = exact_ppr(karate, 0, 0.15)
    for epsilon in (1e-2, 1e-3, 1e-4):
        dv = ppr_push(karate, 0, alpha=0.15, epsilon=epsilon)
        approx = dv.dense(karate.node_count)
        assert np.all(approx <= exact + 1e-12)
        assert np.abs(exact - approx).sum() <= epsilon * karate.total_volume + 1e-12
        for u, mass in dv.r.items():
            assert mass < epsilon * karate.degree(u)


def test_path_of_three_error_bound():
    graph = generators.path(3)
    exact = exact_ppr(graph, 1, 0.3)
    dv = ppr_push(graph, 1, alpha=0.3, epsilon=1e-3)
    assert np.abs(exact - dv.dense(3)).sum() <= 1e-3 * graph.total_volume


def test_mass_is_conserved_exactly_with_fractions(toy):
    dv = ppr_push(toy.graph, 4, alpha=Fraction(1, 5), epsilon=Fraction(1, 200))
    assert dv.pushes > 0
    assert dv.total_mass() == 1
    assert all(isinstance(mass, Fraction) for mass in dv.p.values())


def test_push_rejects_bad_arguments(k4):
    with pytest.raises(ValueError):
        ppr_push(k4, 0, alpha=1.0, epsilon=0.1)
    with pytest.raises(ValueError):
        ppr_push(k4, 0, alpha=0.1, epsilon=0.0)
    with pytest.raises(InvalidNodeError):
        ppr_push(k4, 4, alpha=0.1, epsilon=0.1)


def test_barbell_sweep_finds_clique(barbell):
    result = sweep(barbell, ppr_push(barbell, 0, alpha=0.1, epsilon=1e-4))
    assert result.best.cluster.members.tolist() == [0, 1, 2, 3, 4]
    assert result.best.conductance == pytest.approx(1 / 21)


def test_sweep_ties_go_to_smaller_id():
    graph = generators.path(3)
    dv = DiffusionVector(p={2: 0.1, 1: 0.2, 0: 0.1}, r={}, alpha=0.1, epsilon=0.1, seed_node=1)
    assert sweep(graph, dv).ordering.tolist() == [0, 1, 2]


def test_prefix_values_match_score(toy):
    graph = toy.graph
    result = sweep_ordering(graph, [9, 8, 10, 7, 4, 0])
    assert [prefix.connected for prefix in result.prefixes] == [True, True, True, True, True, False]
    for prefix in result.prefixes:
        expected = score(graph, prefix.cluster, ScoreKind.CONDUCTANCE).value
        assert prefix.conductance == expected
        assert prefix.vol_s == 2 * prefix.m_s + prefix.c_s


def test_sweep_respects_max_size(toy):
    result = sweep_ordering(toy.graph, range(11), max_size=3)
    assert len(result.prefixes) == 3
    with pytest.raises(DegenerateClusterError):
        sweep_ordering(toy.graph, [])


def test_whole_graph_prefix_is_never_best(toy):
    result = sweep_ordering(toy.graph, range(11))
    assert np.isnan(result.prefixes[-1].conductance)
    assert result.best.k < 11


def test_sweep_never_beats_exhaustive_minimum(toy):
    graph = toy.graph
    n = graph.node_count
    best = min(
        score(graph, subset, ScoreKind.CONDUCTANCE).value
        for size in range(1, n)
        for subset in itertools.combinations(range(n), size)
    )
    for seed_node in range(n):
        dv = ppr_push(graph, seed_node, alpha=0.1, epsilon=1e-4)
        assert sweep(graph, dv).best.conductance >= best - 1e-12


def test_local_cluster_on_barbell(barbell):
    candidates = local_cluster(barbell, 0, [0.1, 0.2], default_epsilon_grid(barbell))
    keys = [candidate.cluster.key for candidate in candidates]
    assert len(keys) == len(set(keys))
    assert any(candidate.cluster.members.tolist() == [0, 1, 2, 3, 4] for candidate in candidates)
    for candidate in candidates:
        assert candidate.generator is GeneratorTag.LOCAL_SPECTRAL
        assert candidate.connected and is_connected_subset(barbell, candidate.cluster)
        assert candidate.params["seed"] == 0
        assert candidate.scores[ScoreKind.CONDUCTANCE] == pytest.approx(
            score(barbell, candidate.cluster, ScoreKind.CONDUCTANCE).value, nan_ok=True
        )


def test_local_cluster_single_node_graph():
    graph = Graph.from_edges([], node_count=1)
    candidates = local_cluster(graph, 0, [0.1], [0.01])
    assert [candidate.cluster.members.tolist() for candidate in candidates] == [[0]]


def test_local_cluster_needs_grids(k4):
    with pytest.raises(ValueError):
        local_cluster(k4, 0, [], [0.1])


def test_default_epsilon_grid(barbell):
    assert default_epsilon_grid(barbell) == pytest.approx([0.01, 1 / 210])
    assert default_epsilon_grid(barbell, [100, 10]) == pytest.approx([0.01, 0.001])
    assert default_epsilon_grid(Graph.from_edges([], node_count=2)) == [1.0]


def test_choose_seeds(karate):
    assert choose_seeds(karate, 5).tolist() == list(range(34))
    sample = choose_seeds(karate, 5, seed_all_limit=10, seed=1)
    assert sample.size == 5
    assert sample.tolist() == sorted(set(sample.tolist()))
    assert sample.tolist() == choose_seeds(karate, 5, seed_all_limit=10, seed=1).tolist()


def test_karate_sample_is_sound(karate):
    candidates = local_spectral_sample(karate, LocalSpectralSettings(alphas=[0.05, 0.2]))
    best = np.nanmin([candidate.value(karate, ScoreKind.CONDUCTANCE) for candidate in candidates])
    assert best >= spectral_lower_bound(karate).bound_any_size - 1e-9


def test_karate_default_grid_is_within_factor_two(karate):
    candidates = local_spectral_sample(karate)
    best = np.nanmin([candidate.value(karate, ScoreKind.CONDUCTANCE) for candidate in candidates])
    # the spectral bound is below the exact minimum, so this is at most twice the exact minimum
    assert best <= 2 * spectral_lower_bound(karate).bound_any_size


@pytest.mark.parametrize("seed_node", [0, 16, 33])
def test_finer_epsilon_never_loses_the_best_cluster(karate, seed_node):
    epsilons = [1e-2 / 2**step for step in range(10)]
    for alpha in (0.01, 0.1, 0.5):
        profile = [value for _, value in refinement_profile(karate, seed_node, alpha, epsilons)]
        reached = [value for value in profile if not np.isnan(value)]
        assert reached
        for coarse, fine in zip(reached, reached[1:]):
            assert fine <= coarse + 1e-9


def test_refinement_profile_runs_coarse_to_fine(barbell):
    profile = refinement_profile(barbell, 0, 0.1, [1e-4, 1e-2, 1e-3])
    assert [epsilon for epsilon, _ in profile] == [1e-2, 1e-3, 1e-4]
    best = local_cluster(barbell, 0, [0.1], [1e-4, 1e-2, 1e-3])
    assert profile[-1][1] == pytest.approx(np.nanmin([c.scores[ScoreKind.CONDUCTANCE] for c in best]))


def test_sample_is_independent_of_workers(toy):
    settings = LocalSpectralSettings(alphas=[0.1])
    one = local_spectral_sample(toy.graph, settings, workers=1)
    four = local_spectral_sample(toy.graph, settings, workers=4)
    assert [c.cluster.key for c in one] == [c.cluster.key for c in four]
    assert [c.params for c in one] == [c.params for c in four]
