import copy
import sys

import pytest

from rauc.instance import instance_from_dict, load_bundled


@pytest.fixture(scope="session")
def fleet():
    return load_bundled()


@pytest.fixture(scope="session")
def fleet_doc(fleet):
    return fleet.to_dict()


def reduced_instance(doc, gen_idx, base_demand, branch_periods, epsilon, probs=(0.5, 0.5)):
    """Bundled fleet cut down to some generators and a shorter horizon."""
    d = copy.deepcopy(doc)
    d.pop("initial_state", None)
    d["generators"] = [d["generators"][k] for k in gen_idx]
    d["horizon"] = len(base_demand)
    d["base_demand"] = [float(x) for x in base_demand]
    d["scenario"] = {"branch_periods": list(branch_periods), "epsilon": epsilon, "branch_probs": list(probs)}
    return instance_from_dict(d)


@pytest.fixture
def small(fleet_doc):
    """Three units, six periods, branches at 2 and 4."""
    return reduced_instance(fleet_doc, [0, 2, 5], [300, 400, 450, 500, 480, 420], [2, 4], 0.3)


def random_toy_doc(rng, max_gens=2, max_T=3):
    """Tiny instance whose on-to-on ramps never bind (V, B >= q_max)."""
    n_gen = int(rng.integers(1, max_gens + 1))
    T = int(rng.integers(1, max_T + 1))
    gens = []
    for _ in range(n_gen):
        q_min = float(rng.uniform(5, 40))
        q_max = float(q_min + rng.uniform(10, 80))
        gens.append({
            "a": float(rng.uniform(0, 50)), "b": float(rng.uniform(5, 30)), "c": float(rng.choice([0.0, rng.uniform(0, 0.05)])),
            "q_min": q_min, "q_max": q_max,
            "V_prime": float(rng.uniform(q_min, q_max)), "V": q_max * float(rng.uniform(1, 2)),
            "B_prime": float(rng.uniform(q_min, q_max)), "B": q_max * float(rng.uniform(1, 2)),
            "M": int(rng.integers(0, 3)), "L": int(rng.integers(0, 3)),
            "SU": float(rng.uniform(0, 100)), "SD": float(rng.uniform(0, 30)),
        })
    cap = sum(g["q_max"] for g in gens)
    demand = [float(rng.uniform(0.05, 0.7) * cap) for _ in range(T)]
    branch = [int(rng.integers(2, T + 1))] if T >= 2 and rng.uniform() < 0.8 else []
    p = float(rng.uniform(0.2, 0.8))
    return {
        "name": "toy", "horizon": T, "generators": gens, "base_demand": demand,
        "scenario": {"branch_periods": branch, "epsilon": float(rng.uniform(0, 0.5)), "branch_probs": [p, 1 - p]},
    }


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
