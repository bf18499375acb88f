import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rauc.instance import InstanceError, ScenarioSpec
from rauc.scenario_tree import (
    build_tree,
    build_tree_from_spec,
    chain_tree,
    enumerate_paths,
    node_count,
    path_matrix,
    total_demand_random_variable,
)


def test_fleet_tree_counts(fleet):
    tree = build_tree(fleet, 0.1)
    assert tree.n_nodes == 90 == 6 * 1 + 6 * 2 + 6 * 4 + 6 * 8
    assert tree.leaves.size == 8
    assert [tree.stage(t).size for t in (1, 6, 7, 12, 13, 18, 19, 24)] == [1, 1, 2, 2, 4, 4, 8, 8]


def test_scenario_one_at_period_seven(fleet):
    tree = build_tree(fleet, 0.1)
    first_leaf_path = path_matrix(tree)[0]
    assert tree.demand[first_leaf_path[6]] == pytest.approx(1035.0)


def test_zero_epsilon_structure(fleet):
    tree = build_tree(fleet, 0.0)
    assert tree.n_nodes == 90
    np.testing.assert_allclose(tree.path_prob[tree.leaves], 0.125)
    for t in range(1, 25):
        assert np.ptp(tree.demand[tree.stage(t)]) == 0


def test_total_demand(fleet):
    assert np.all(total_demand_random_variable(build_tree(fleet, 0.0)) == 27100)
    d = total_demand_random_variable(build_tree(fleet, 0.1))
    assert d[-1] == pytest.approx(5350 + 1.1 * 21750) == pytest.approx(29275)
    assert d[0] == pytest.approx(5350 + 0.9 * 21750)
    assert (d[0] + d[-1]) / 2 == pytest.approx(27100)


def test_enumerate_paths_fleet(fleet):
    paths = enumerate_paths(build_tree(fleet, 0.3))
    assert len(paths) == 8
    assert all(len(p) == 24 for _, p, _ in paths)
    assert sum(prob for *_, prob in paths) == pytest.approx(1.0, abs=1e-12)


def test_single_scenario_tree():
    tree = chain_tree([3.0, 4.0, 5.0])
    paths = enumerate_paths(tree)
    assert len(paths) == 1
    assert paths[0][2] == 1.0
    assert paths[0][1] == (0, 1, 2)


def test_epsilon_at_least_one_rejected(fleet):
    with pytest.raises(InstanceError):
        build_tree(fleet, 1.0)


def test_negative_epsilon_rejected(fleet):
    with pytest.raises(InstanceError):
        build_tree(fleet, -0.1)


def test_restrict_to_keeps_history_and_subtree(fleet):
    tree = build_tree(fleet, 0.2)
    n = int(tree.stage(13)[2])
    sub, old = tree.restrict_to(n)
    assert sub.n_nodes == 12 + 6 * 1 + 6 * 2
    assert sub.leaves.size == 2
    np.testing.assert_allclose(sub.demand, tree.demand[old])
    assert np.all(sub.cond_prob[sub.period <= 13] == 1.0)


def test_dump_has_one_line_per_node(fleet):
    tree = build_tree(fleet, 0.1)
    lines = tree.dump().strip().splitlines()
    assert len(lines) == 90
    assert len(lines[0].split("\t")) == 6


schedules = st.integers(2, 9).flatmap(
    lambda T: st.tuples(
        st.just(T),
        st.lists(st.integers(2, T), unique=True, max_size=3).map(sorted),
        st.integers(2, 3),
    )
)


@settings(max_examples=60, deadline=None)
@given(schedules, st.floats(0, 0.9))
def test_node_count_formula_and_probabilities(sched, eps):
    T, branch, k = sched
    probs = np.full(k, 1.0 / k)
    signs = np.linspace(-1, 1, k)
    spec = ScenarioSpec(tuple(branch), eps, tuple(probs), tuple(signs))
    tree = build_tree_from_spec(np.linspace(10, 20, T), spec)
    assert tree.n_nodes == node_count(T, branch, k)
    assert tree.path_prob[tree.leaves].sum() == pytest.approx(1.0, abs=1e-12)
    # path probability is the product of conditional probabilities along the path
    for leaf, path, prob in enumerate_paths(tree):
        assert prob == pytest.approx(np.prod(tree.cond_prob[list(path)]), abs=1e-12)
    assert np.all(tree.demand > 0)


def test_merge_collapses_degenerate_tree(fleet):
    from rauc.scenario_tree import merge_identical_siblings

    tree = build_tree(fleet, 0.0)
    small, rep = merge_identical_siblings(tree)
    assert small.n_nodes == 24
    assert np.all(small.cond_prob == 1.0)
    np.testing.assert_allclose(small.demand[rep], tree.demand)


def test_merge_is_noop_with_variability(fleet):
    from rauc.scenario_tree import merge_identical_siblings

    tree = build_tree(fleet, 0.3)
    small, rep = merge_identical_siblings(tree)
    assert small.equals(tree)
    np.testing.assert_array_equal(rep, np.arange(90))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1))
def test_merge_preserves_nested_risk(seed, lam):
    # demands drawn from a tiny alphabet so identical sibling subtrees are common
    from oracles import random_tree
    from rauc.risk import RiskSpec, composite_risk
    from rauc.scenario_tree import ScenarioTree, merge_identical_siblings

    rng = np.random.default_rng(seed)
    t = random_tree(rng, int(rng.integers(1, 6)))
    demand = rng.integers(0, 2, t.n_nodes).astype(float)
    tree = ScenarioTree(t.period, t.parent, t.cond_prob, demand)
    small, rep = merge_identical_siblings(tree)
    assert small.n_nodes <= tree.n_nodes
    np.testing.assert_allclose(small.demand[rep], tree.demand)
    np.testing.assert_allclose(np.bincount(rep, weights=tree.path_prob, minlength=small.n_nodes), small.path_prob)
    spec = RiskSpec.musd(lam)
    # any cost that is a function of the node's demand is carried over exactly
    full = composite_risk(tree, demand**2 + 3 * demand, spec)
    assert composite_risk(small, small.demand**2 + 3 * small.demand, spec) == pytest.approx(full, abs=1e-9)
