import json
import math

import numpy as np
import pytest

from conftest import random_toy_doc, reduced_instance
from oracles import enumerate_optimum
from rauc.instance import Generator, instance_from_dict
from rauc.milp import OPTIMAL, solve
from rauc.risk import RiskSpec
from rauc.scenario_tree import build_tree
from rauc.ucmodel import (
    MULTI_STAGE,
    TWO_STAGE,
    ExtractionError,
    _build,
    build_deterministic,
    build_ms,
    build_ts,
    extract_policy,
    piecewise_segments,
)


def _one_gen_doc(demand, **over):
    g = {"a": 5.0, "b": 2.0, "c": 0.0, "q_min": 10.0, "q_max": 100.0, "V_prime": 100.0, "V": 100.0,
         "B_prime": 100.0, "B": 100.0, "M": 0, "L": 0, "SU": 0.0, "SD": 0.0}
    g.update(over)
    return {"name": "one", "horizon": len(demand), "generators": [g], "base_demand": list(demand),
            "scenario": {"branch_periods": [], "epsilon": 0.0, "branch_probs": [0.5, 0.5]}}


# --- piecewise cost -------------------------------------------------------------------------


def test_first_segment_slope(fleet):
    pc = piecewise_segments(fleet.generators[2])
    assert pc.seg_len == pytest.approx(41.25)
    assert pc.slopes[0] == pytest.approx(16.8025)


def test_secant_error_on_mw_grid(fleet):
    g = fleet.generators[2]
    pc = piecewise_segments(g)
    grid = np.arange(30.0, 196.0)
    exact = np.array([g.production_cost(v) for v in grid])
    err = pc.evaluate(grid) - exact
    assert err.min() >= -1e-9  # secants overestimate
    assert err.max() <= 0.002 * 41.25**2 / 4 + 1e-9
    assert err.max() == pytest.approx(0.8508, abs=1e-3)


def test_linear_cost_is_exact(fleet):
    g = Generator(**{**fleet.generators[0].__dict__, "prod_cost_c": 0.0})
    pc = piecewise_segments(g)
    np.testing.assert_allclose(pc.slopes, g.prod_cost_b)
    assert pc(300.0) == pytest.approx(g.production_cost(300.0))


def test_breakpoints_equally_spaced(fleet):
    pc = piecewise_segments(fleet.generators[0], K=7)
    assert pc.K == 7
    np.testing.assert_allclose(np.diff(pc.breakpoints), pc.seg_len)
    with pytest.raises(ValueError):
        piecewise_segments(fleet.generators[0], K=0)


def test_fixed_output_generator():
    g = instance_from_dict(_one_gen_doc([50.0], q_min=50.0, q_max=50.0)).generators[0]
    pc = piecewise_segments(g)
    assert pc.degenerate
    assert pc(50.0) == pytest.approx(g.production_cost(50.0))


# --- deterministic ----------------------------------------------------------------------------


def test_single_generator_hand_solve():
    inst = instance_from_dict(_one_gen_doc([50.0]))
    sol = solve(build_deterministic(inst, [50.0]).model)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(5 + 2 * 50)


def test_zero_demand_is_free(small):
    art = build_deterministic(small, [0.0] * small.horizon_T)
    sol = solve(art.model)
    assert sol.objective == pytest.approx(0.0, abs=1e-9)
    assert extract_policy(art, sol).u.sum() == 0


def test_demand_path_length_checked(small):
    with pytest.raises(ValueError):
        build_deterministic(small, [1.0, 2.0])


def test_over_capacity_fails_at_solve():
    inst = instance_from_dict(_one_gen_doc([150.0]))
    sol = solve(build_deterministic(inst, [150.0]).model)
    assert sol.x is None


# --- model shapes -----------------------------------------------------------------------------


def test_ms_binaries(fleet):
    art = build_ms(fleet, build_tree(fleet, 0.2), RiskSpec.musd(0.2))
    assert art.n_binaries == 2700
    assert art.mode == MULTI_STAGE


def test_ts_shares_status_per_period(fleet):
    tree = build_tree(fleet, 0.2)
    art = build_ts(fleet, tree, RiskSpec.musd(0.2))
    assert art.n_binaries == 720
    assert art.mode == TWO_STAGE
    for t in (1, 7, 24):
        nodes = tree.stage(t)
        assert len(set(art.u[:, nodes].ravel())) == fleet.n_generators
    # dispatch stays node-wise
    assert len(set(art.v[0, tree.stage(24)])) == 8


def test_symbol_table(small):
    art = build_ms(small, build_tree(small), RiskSpec.musd(0.1))
    doc = json.loads(art.symbol_table_json())
    assert doc["mode"] == MULTI_STAGE
    assert len(doc["variables"]) == art.model.n_vars
    fams = {r["family"] for r in doc["variables"]}
    assert {"u", "y", "z", "v", "theta"} <= fams


def test_extract_rejects_fractional(small):
    art = build_ms(small, build_tree(small), RiskSpec.musd(0.1))
    sol = solve(art.model)
    sol.x = sol.x.copy()
    sol.x[art.u[0, 0]] = 0.5
    with pytest.raises(ExtractionError):
        extract_policy(art, sol)


def test_expectation_objective_matches_lambda_zero_epigraph(small):
    tree = build_tree(small)
    a = solve(build_ms(small, tree, RiskSpec.expectation()).model)
    b = solve(build_ms(small, tree, RiskSpec.musd(0.0)).model)
    assert a.objective == pytest.approx(b.objective, rel=1e-6)


# --- cross-model relations ---------------------------------------------------------------------


@pytest.mark.parametrize("lam", [0.0, 0.5])
def test_two_stage_never_beats_multi_stage(small, lam):
    tree = build_tree(small)
    ts = solve(build_ts(small, tree, RiskSpec.musd(lam)).model)
    ms = solve(build_ms(small, tree, RiskSpec.musd(lam)).model)
    assert ts.objective >= ms.objective - 1e-6 * abs(ms.objective)


def test_degenerate_tree_matches_deterministic(small):
    tree = build_tree(small, 0.0)
    det = solve(build_deterministic(small, list(small.demand.base_demand)).model).objective
    for build in (build_ts, build_ms):
        assert solve(build(small, tree, RiskSpec.musd(0.4)).model).objective == pytest.approx(det, rel=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_formulation_variants_agree(fleet_doc, seed):
    rng = np.random.default_rng(seed)
    gens = [0] + sorted((1 + rng.choice(9, 2, replace=False)).tolist())
    demand = np.linspace(200, 450, 5) + rng.uniform(-50, 50, 5)
    inst = reduced_instance(fleet_doc, gens, demand, [3], 0.3)
    tree = build_tree(inst)
    spec = RiskSpec.musd(float(rng.uniform()))
    for mode in (TWO_STAGE, MULTI_STAGE):
        ref = solve(_build(inst, tree, spec, mode, tighten=False).model)
        tight = solve(_build(inst, tree, spec, mode).model)
        lean = solve(_build(inst, tree, spec, mode, printed_windows=False).model)
        assert ref.status == tight.status == lean.status == OPTIMAL
        assert tight.objective == pytest.approx(ref.objective, rel=1e-6)
        assert lean.objective == pytest.approx(ref.objective, rel=1e-6)


@pytest.mark.parametrize("seed", range(8))
def test_toy_models_match_enumeration(seed):
    rng = np.random.default_rng(1000 + seed)
    inst = instance_from_dict(random_toy_doc(rng))
    tree = build_tree(inst)
    spec = RiskSpec.musd(float(rng.uniform()))
    for two_stage, build in ((False, build_ms), (True, build_ts)):
        ref = enumerate_optimum(inst, tree, spec, two_stage)
        sol = solve(build(inst, tree, spec).model)
        if math.isinf(ref):
            assert sol.x is None
        else:
            assert sol.objective == pytest.approx(ref, rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("mode", [TWO_STAGE, MULTI_STAGE])
def test_lumped_solve_matches_full_tree(small, mode):
    from rauc.policy import evaluate_policy, policy_violations
    from rauc.ucmodel import solve_model

    tree = build_tree(small, 0.0)
    spec = RiskSpec.musd(0.6)
    lumped = solve_model(small, tree, spec, mode)
    full = solve_model(small, tree, spec, mode, merge=False)
    assert lumped.merged_nodes == tree.n_nodes - small.horizon_T
    assert full.merged_nodes == 0
    assert lumped.sol.objective == pytest.approx(full.sol.objective, rel=1e-6)
    assert policy_violations(small, tree, lumped.policy) == []
    assert evaluate_policy(small, tree, lumped.policy, spec) == pytest.approx(lumped.sol.objective, rel=1e-6)
