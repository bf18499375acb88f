"""Policy evaluation and the rolling-horizon procedure."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .instance import Instance
from .milp import SolveOptions, solve
from .risk import RiskSpec, composite_risk
from .scenario_tree import ScenarioTree
from .ucmodel import (
    DEFAULT_PIECES,
    MULTI_STAGE,
    FixedDecisions,
    Policy,
    build_ts,
    extract_policy,
    piecewise_segments,
)

REVELATION = "revelation"
EVERY_PERIOD = "every_period"

FEAS_TOL = 1e-6


class PolicyError(ValueError):
    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = violations or []


# ---------------------------------------------------------------------------
# feasibility and evaluation
# ---------------------------------------------------------------------------


def policy_violations(inst: Instance, tree: ScenarioTree, pol: Policy, tol: float = FEAS_TOL) -> list[str]:
    """Every unit-commitment row the policy breaks, as readable strings."""
    I, N = inst.n_generators, tree.n_nodes
    if pol.u.shape != (I, N):
        return [f"policy shape {pol.u.shape} does not match ({I}, {N})"]
    out: list[str] = []
    u, v, y, z = pol.u, pol.v, pol.y, pol.z
    for name, arr in (("u", u), ("y", y), ("z", z)):
        bad = np.argwhere((np.abs(arr) > tol) & (np.abs(arr - 1) > tol))
        out.extend(f"{name}[{inst.generators[i].id},{n}] not binary" for i, n in bad)

    init = inst.initial_state
    u0 = np.where(np.asarray(init.on, dtype=bool), 1.0, 0.0)
    v0 = np.asarray(init.output, dtype=float)
    par = tree.parent
    has_par = par >= 0
    up = np.where(has_par, u[:, np.maximum(par, 0)], u0[:, None])
    vp = np.where(has_par, v[:, np.maximum(par, 0)], v0[:, None])

    short = v.sum(axis=0) - tree.demand
    out.extend(f"demand[{n}]: supply short by {-short[n]:.6g}" for n in np.flatnonzero(short < -tol))
    for i, g in enumerate(inst.generators):
        gid = g.id
        scale = max(1.0, g.q_max)
        checks = (
            ("cap_lo", g.q_min * u[i] - v[i]),
            ("cap_hi", v[i] - g.q_max * u[i]),
            ("startup", u[i] - up[i] - y[i]),
            ("shutdown", up[i] - u[i] - z[i]),
            ("rampup", v[i] - vp[i] - g.startup_rate_Vp * y[i] - g.rampup_rate_V * up[i]),
            ("rampdown", vp[i] - v[i] - g.shutdown_rate_Bp * z[i] - g.rampdown_rate_B * u[i]),
        )
        for row, excess in checks:
            out.extend(f"{row}[{gid},{n}] exceeded by {excess[n]:.6g}" for n in np.flatnonzero(excess > tol * scale))
        for n in range(N):
            rise = u[i, n] - up[i, n]
            if rise > tol:
                for m in tree.descendants_within(n, g.min_up_M):
                    if u[i, m] < rise - tol:
                        out.append(f"minup[{gid},{n},{m}] broken")
            if rise < -tol:
                for m in tree.descendants_within(n, g.min_down_L):
                    if u[i, m] > 1 + rise + tol:
                        out.append(f"mindown[{gid},{n},{m}] broken")
        f_on = init.forced_on_periods(g, i)
        f_off = init.forced_off_periods(g, i)
        for n in range(N):
            t = int(tree.period[n])
            if t <= f_on and u[i, n] < 1 - tol:
                out.append(f"init_on[{gid},{n}] broken")
            elif f_on < t <= f_off and u[i, n] > tol:
                out.append(f"init_off[{gid},{n}] broken")
    return out


def node_costs(inst: Instance, tree: ScenarioTree, pol: Policy, K: int = DEFAULT_PIECES) -> np.ndarray:
    """Realized cost of every node: fixed, production, start-up and shut-down."""
    cost = np.zeros(tree.n_nodes)
    for i, g in enumerate(inst.generators):
        pc = piecewise_segments(g, K)
        on = pol.u[i] > 0.5
        prod = np.where(on, pc.evaluate(pol.v[i]), 0.0)
        cost += g.fixed_cost_a * on + prod + g.startup_cost_SU * pol.y[i] + g.shutdown_cost_SD * pol.z[i]
    return cost


def evaluate_policy(
    inst: Instance, tree: ScenarioTree, pol: Policy, spec: RiskSpec, K: int = DEFAULT_PIECES, check: bool = True
) -> float:
    """Composite risk of the cost process generated by ``pol``."""
    if check:
        bad = policy_violations(inst, tree, pol)
        if bad:
            shown = "; ".join(bad[:10])
            more = f" (+{len(bad) - 10} more)" if len(bad) > 10 else ""
            raise PolicyError(f"infeasible policy, {len(bad)} violated rows: {shown}{more}", bad)
    return composite_risk(tree, node_costs(inst, tree, pol, K), spec)


# ---------------------------------------------------------------------------
# rolling horizon
# ---------------------------------------------------------------------------


@dataclass
class RollingOptions:
    solver: SolveOptions = field(default_factory=SolveOptions)
    schedule: str = REVELATION
    pieces: int = DEFAULT_PIECES


@dataclass
class RollingResult:
    policy: Policy
    z_rh: float
    n_solves: int
    wall_time: float
    max_rel_gap: float
    solved_at: list[int]

    def __iter__(self):
        # allows ``pol, z = rolling_horizon(...)``
        return iter((self.policy, self.z_rh))


def revelation_nodes(tree: ScenarioTree, schedule: str = REVELATION) -> list[int]:
    """Nodes where new information arrives: the root and every child of a branching node."""
    if schedule == EVERY_PERIOD:
        return list(range(tree.n_nodes))
    if schedule != REVELATION:
        raise ValueError(f"unknown schedule {schedule!r}")
    fan = np.diff(tree.child_ptr)
    return [0] + [n for n in range(1, tree.n_nodes) if fan[tree.parent[n]] > 1]


def _segment(tree: ScenarioTree, n: int, reveal: set[int]) -> list[int]:
    seg = [n]
    while True:
        kids = tree.children(seg[-1])
        if kids.size != 1 or int(kids[0]) in reveal:
            return seg
        seg.append(int(kids[0]))


def rolling_horizon(
    inst: Instance,
    tree: ScenarioTree,
    spec: RiskSpec,
    opts: RollingOptions | None = None,
    root_policy: Policy | None = None,
) -> RollingResult:
    """Re-solve two-stage models at each revelation node with the history fixed.

    ``root_policy`` may carry an already solved two-stage policy for the same
    tree and risk measure; the root sub-problem is that very model, so its
    decisions are reused instead of solved again.
    """
    opts = opts or RollingOptions()
    start = time.perf_counter()
    I, N = inst.n_generators, tree.n_nodes
    u = np.full((I, N), np.nan)
    v = np.full((I, N), np.nan)
    y = np.full((I, N), np.nan)
    z = np.full((I, N), np.nan)

    order = revelation_nodes(tree, opts.schedule)
    reveal = set(order)
    solved_at: list[int] = []
    max_gap = 0.0
    for n in order:
        seg = _segment(tree, n, reveal)
        if n == 0 and root_policy is not None:
            sub = root_policy
            local = np.arange(N)
        else:
            sub_tree, old = tree.restrict_to(n) if n else (tree, np.arange(N))
            local = np.full(N, -1, dtype=np.int64)
            local[old] = np.arange(old.size)
            history = tree.ancestors(n)[:-1]
            fixed = FixedDecisions()
            for a in history:
                fixed.set(int(local[a]), u[:, a], v[:, a], y[:, a], z[:, a])
            art = build_ts(inst, sub_tree, spec, opts.pieces, fixed)
            sol = solve(art.model, opts.solver)
            if sol.x is None:
                raise PolicyError(f"sub-problem at node {n} ended with status {sol.status}")
            max_gap = max(max_gap, sol.rel_gap)
            sub = extract_policy(art, sol)
            solved_at.append(n)
        for m in seg:
            k = int(local[m])
            u[:, m], v[:, m], y[:, m], z[:, m] = sub.u[:, k], sub.v[:, k], sub.y[:, k], sub.z[:, k]

    if np.isnan(u).any():
        raise PolicyError("rolling horizon left nodes without decisions")
    pol = Policy(u, v, y, z, MULTI_STAGE, "rolling_horizon")
    value = evaluate_policy(inst, tree, pol, spec, opts.pieces)
    return RollingResult(pol, value, len(solved_at), time.perf_counter() - start, max_gap, solved_at)
