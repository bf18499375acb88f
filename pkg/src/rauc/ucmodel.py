"""Unit-commitment MILPs over scenario trees.

One builder covers three nonanticipativity modes:

* ``deterministic`` - a single demand path (chain tree), plain cost sum;
* ``two_stage``     - commitment ``u`` and start/stop indicators ``y, z`` shared by
  all nodes of a period, dispatch per node;
* ``multi_stage``   - every decision indexed by node.

Temporal rows link each node to its parent (its unique history predecessor);
minimum up/down windows range over descendants. Production cost is a
piecewise-linear secant approximation of ``b v + c v^2`` on ``[q_min, q_max]``,
gated by ``u`` so an idle generator costs nothing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .instance import Generator, Instance
from .milp import BINARY, CONTINUOUS, MilpModel, MilpSolution, ModelBuilder, SolveOptions, solve
from .risk import RiskSpec
from .scenario_tree import ScenarioTree, chain_tree, merge_identical_siblings

DETERMINISTIC = "deterministic"
TWO_STAGE = "two_stage"
MULTI_STAGE = "multi_stage"
MODES = (DETERMINISTIC, TWO_STAGE, MULTI_STAGE)

DEFAULT_PIECES = 4
BINARY_TOL = 1e-6


class ExtractionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# piecewise production cost
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseCost:
    """Secant approximation of a generator's production cost.

    ``base`` is ``g(q_min)``; above ``q_min`` the cost rises with ``slopes[k]``
    across the ``k``-th of ``K`` equal segments.
    """

    breakpoints: np.ndarray
    slopes: np.ndarray
    fixed_cost: float
    base: float
    degenerate: bool = False

    @property
    def K(self) -> int:
        return int(self.slopes.size)

    @property
    def seg_len(self) -> float:
        return float(self.breakpoints[1] - self.breakpoints[0]) if self.K else 0.0

    @property
    def q_min(self) -> float:
        return float(self.breakpoints[0])

    def fills(self, v: float) -> np.ndarray:
        """In-order segment fills for output ``v``."""
        return np.clip(v - self.breakpoints[:-1], 0.0, self.seg_len)

    def __call__(self, v: float) -> float:
        """Approximate production cost at output ``v`` (fixed cost excluded)."""
        return float(self.base + self.slopes @ self.fills(v))

    def evaluate(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        f = np.clip(v[..., None] - self.breakpoints[:-1], 0.0, self.seg_len)
        return self.base + f @ self.slopes


def piecewise_segments(gen: Generator, K: int = DEFAULT_PIECES) -> PiecewiseCost:
    if K < 1:
        raise ValueError("need at least one segment")
    lo, hi = gen.q_min, gen.q_max
    bp = np.linspace(lo, hi, K + 1)
    b, c = gen.prod_cost_b, gen.prod_cost_c
    slopes = b + c * (bp[:-1] + bp[1:])
    degenerate = hi == lo
    if degenerate:
        bp = np.array([lo, lo])
        slopes = np.array([b + 2 * c * lo])
    return PiecewiseCost(bp, slopes, gen.fixed_cost_a, gen.production_cost(lo), degenerate)


# ---------------------------------------------------------------------------
# model artifacts
# ---------------------------------------------------------------------------


@dataclass
class FixedDecisions:
    """Decisions pinned at given nodes of the tree being modelled."""

    u: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)
    y: dict[int, np.ndarray] = field(default_factory=dict)
    z: dict[int, np.ndarray] = field(default_factory=dict)

    def set(self, node: int, u, v, y, z) -> None:
        self.u[node] = np.asarray(u, dtype=float)
        self.v[node] = np.asarray(v, dtype=float)
        self.y[node] = np.asarray(y, dtype=float)
        self.z[node] = np.asarray(z, dtype=float)

    def __len__(self) -> int:
        return len(self.u)


@dataclass
class ModelArtifacts:
    model: MilpModel
    mode: str
    inst: Instance
    tree: ScenarioTree
    spec: RiskSpec
    u: np.ndarray  # (I, n_nodes) variable index; TS nodes of a period share one index
    y: np.ndarray
    z: np.ndarray
    v: np.ndarray
    seg: np.ndarray  # (I, n_nodes, K), -1 where absent
    theta: np.ndarray  # (n_nodes,), -1 when the objective is not an epigraph
    pieces: tuple[PiecewiseCost, ...]

    @property
    def n_binaries(self) -> int:
        return self.model.n_binaries

    def symbol_table(self) -> dict:
        """Sidecar document mapping variable names to (family, generator, node/period, segment)."""
        m = self.model
        rows = []
        for j, name in enumerate(m.var_names):
            family, _, rest = name.partition("[")
            rows.append({"index": j, "name": name, "family": family, "key": rest.rstrip("]")})
        return {"mode": self.mode, "n_nodes": self.tree.n_nodes, "variables": rows}

    def symbol_table_json(self) -> str:
        return json.dumps(self.symbol_table(), indent=1)


def _gen_label(inst: Instance, i: int) -> int:
    return inst.generators[i].id


def _build(
    inst: Instance,
    tree: ScenarioTree,
    spec: RiskSpec,
    mode: str,
    K: int = DEFAULT_PIECES,
    fixed: FixedDecisions | None = None,
    tighten: bool = True,
    printed_windows: bool = True,
) -> ModelArtifacts:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if tree.T - tree.t0 + 1 != inst.horizon_T or tree.t0 != 1:
        raise ValueError(f"tree spans periods {tree.t0}..{tree.T}, instance horizon is {inst.horizon_T}")
    I = inst.n_generators
    N = tree.n_nodes
    b = ModelBuilder(f"{inst.name}-{mode}")
    pieces = tuple(piecewise_segments(g, K) for g in inst.generators)
    shared = mode == TWO_STAGE

    u = np.full((I, N), -1, dtype=np.int64)
    y = np.full((I, N), -1, dtype=np.int64)
    z = np.full((I, N), -1, dtype=np.int64)
    v = np.full((I, N), -1, dtype=np.int64)
    seg = np.full((I, N, K), -1, dtype=np.int64)

    # status-variable owners: one per (i, period) in TS, one per (i, node) otherwise
    for i in range(I):
        gl = _gen_label(inst, i)
        if shared:
            for t in range(1, tree.T + 1):
                nodes = tree.stage(t)
                ui = b.add_var(f"u[{gl},t{t}]", BINARY)
                yi = b.add_var(f"y[{gl},t{t}]", BINARY)
                zi = b.add_var(f"z[{gl},t{t}]", BINARY)
                u[i, nodes], y[i, nodes], z[i, nodes] = ui, yi, zi
        else:
            for n in range(N):
                u[i, n] = b.add_var(f"u[{gl},{n}]", BINARY)
                y[i, n] = b.add_var(f"y[{gl},{n}]", BINARY)
                z[i, n] = b.add_var(f"z[{gl},{n}]", BINARY)
        g = inst.generators[i]
        pc = pieces[i]
        for n in range(N):
            v[i, n] = b.add_var(f"v[{gl},{n}]", CONTINUOUS, 0.0, g.q_max)
            if not pc.degenerate:
                for k in range(pc.K):
                    seg[i, n, k] = b.add_var(f"v[{gl},{n},{k + 1}]", CONTINUOUS, 0.0, pc.seg_len)

    # status owners: the nodes whose rows we write for u/y/z-only constraints
    if shared:
        owners = [int(tree.stage(t)[0]) for t in range(1, tree.T + 1)]
    else:
        owners = list(range(N))

    def later(n: int, depth: int) -> list[int]:
        """Status owners 1..depth periods after owner ``n`` (descendants, or periods in TS)."""
        if shared:
            t = int(tree.period[n])
            return [int(tree.stage(tt)[0]) for tt in range(t + 1, min(t + depth, tree.T) + 1)]
        return tree.descendants_within(n, depth)

    def earlier(m: int, depth: int) -> list[int]:
        """Status owners on the path to ``m`` at most ``depth`` periods before it, ``m`` included."""
        if shared:
            t = int(tree.period[m])
            return [int(tree.stage(tt)[0]) for tt in range(max(1, t - depth), t + 1)]
        out = []
        k = m
        while k >= 0 and len(out) <= depth:
            out.append(k)
            k = int(tree.parent[k])
        return out

    won: dict[int, int] = {}
    woff: dict[int, int] = {}
    init = inst.initial_state
    for i, g in enumerate(inst.generators):
        gl = _gen_label(inst, i)
        pc = pieces[i]
        u0 = 1.0 if init.on[i] else 0.0
        v0 = float(init.output[i])

        for n in owners:
            par = int(tree.parent[n])
            un, yn, zn = u[i, n], y[i, n], z[i, n]
            # prev-status term: (coef dict, constant)
            if par >= 0:
                prev = {int(u[i, par]): 1.0}
                prev_const = 0.0
            else:
                prev = {}
                prev_const = u0
            tag = f"{gl},{n}"
            # u_n - u_prev <= u_m over the min-up window
            for m in later(n, g.min_up_M) if printed_windows else ():
                row = {un: 1.0, int(u[i, m]): -1.0}
                for k_, a_ in prev.items():
                    row[k_] = row.get(k_, 0.0) - a_
                b.add_row(row, "<=", prev_const, f"minup[{tag},{m}]")
            # u_prev - u_n <= 1 - u_m over the min-down window
            for m in later(n, g.min_down_L) if printed_windows else ():
                row = dict(prev)
                row[un] = row.get(un, 0.0) - 1.0
                row[int(u[i, m])] = row.get(int(u[i, m]), 0.0) + 1.0
                b.add_row(row, "<=", 1.0 - prev_const, f"mindown[{tag},{m}]")
            row = {un: 1.0, yn: -1.0}
            for k_, a_ in prev.items():
                row[k_] = row.get(k_, 0.0) - a_
            b.add_row(row, "<=", prev_const, f"startup[{tag}]")
            row = {un: -1.0, zn: -1.0}
            for k_, a_ in prev.items():
                row[k_] = row.get(k_, 0.0) + a_
            b.add_row(row, "<=", -prev_const, f"shutdown[{tag}]")
            if tighten:
                # a start-up flag on an idle unit, or a shut-down flag after an idle
                # period, relaxes no row; excluding them keeps every optimum
                b.add_row({yn: 1.0, un: -1.0}, "<=", 0.0, f"y_le_u[{tag}]")
                row = {zn: 1.0}
                for k_, a_ in prev.items():
                    row[k_] = row.get(k_, 0.0) - a_
                b.add_row(row, "<=", prev_const, f"z_le_uprev[{tag}]")
                # exact switch indicators: on integer points w = max(u - u_prev, 0)
                # and s = max(u_prev - u, 0)
                wn = b.add_var(f"w_on[{tag}]", CONTINUOUS, 0.0, 1.0)
                sn = b.add_var(f"w_off[{tag}]", CONTINUOUS, 0.0, 1.0)
                won[n], woff[n] = wn, sn
                row = {un: 1.0, wn: -1.0}
                for k_, a_ in prev.items():
                    row[k_] = row.get(k_, 0.0) - a_
                b.add_row(row, "<=", prev_const, f"won_ge[{tag}]")
                b.add_row({wn: 1.0, un: -1.0}, "<=", 0.0, f"won_le_u[{tag}]")
                row = {wn: 1.0, **prev}
                b.add_row(row, "<=", 1.0 - prev_const, f"won_le_off[{tag}]")
                row = {un: -1.0, sn: -1.0, **prev}
                b.add_row(row, "<=", -prev_const, f"woff_ge[{tag}]")
                row = {sn: 1.0}
                for k_, a_ in prev.items():
                    row[k_] = -a_
                b.add_row(row, "<=", prev_const, f"woff_le_uprev[{tag}]")
                b.add_row({sn: 1.0, un: 1.0}, "<=", 1.0, f"woff_le_off[{tag}]")
                b.add_row({wn: 1.0, yn: -1.0}, "<=", 0.0, f"y_ge_won[{tag}]")
                b.add_row({sn: 1.0, zn: -1.0}, "<=", 0.0, f"z_ge_woff[{tag}]")

        if tighten:
            # at most one switch inside a minimum up/down window, and it fixes the status
            for m in owners:
                um = int(u[i, m])
                row = {um: -1.0}
                for k in earlier(m, g.min_up_M):
                    row[won[k]] = 1.0
                b.add_row(row, "<=", 0.0, f"turnon[{gl},{m}]")
                row = {um: 1.0}
                for k in earlier(m, g.min_down_L):
                    row[woff[k]] = 1.0
                b.add_row(row, "<=", 1.0, f"turnoff[{gl},{m}]")

        # carry-over obligations from the initial state
        f_on = init.forced_on_periods(g, i)
        f_off = init.forced_off_periods(g, i)
        for n in owners:
            t = int(tree.period[n])
            if t <= f_on:
                b.add_row({u[i, n]: 1.0}, "=", 1.0, f"init_on[{gl},{n}]")
            elif t <= f_off:
                b.add_row({u[i, n]: 1.0}, "=", 0.0, f"init_off[{gl},{n}]")

        for n in range(N):
            par = int(tree.parent[n])
            un, yn, zn, vn = int(u[i, n]), int(y[i, n]), int(z[i, n]), int(v[i, n])
            tag = f"{gl},{n}"
            b.add_row({vn: 1.0, un: -g.q_min}, ">=", 0.0, f"cap_lo[{tag}]")
            b.add_row({vn: 1.0, un: -g.q_max}, "<=", 0.0, f"cap_hi[{tag}]")
            if pc.degenerate:
                b.add_row({vn: 1.0, un: -g.q_min}, "=", 0.0, f"pwl[{tag}]")
            else:
                row = {vn: 1.0, un: -g.q_min}
                for k in range(pc.K):
                    row[int(seg[i, n, k])] = -1.0
                    b.add_row({int(seg[i, n, k]): 1.0, un: -pc.seg_len}, "<=", 0.0, f"seg[{tag},{k + 1}]")
                b.add_row(row, "=", 0.0, f"pwl[{tag}]")
            # ramp up / start-up rate: v_n - v_prev <= V' y_n + V u_prev
            if par >= 0:
                b.add_row(
                    {vn: 1.0, int(v[i, par]): -1.0, yn: -g.startup_rate_Vp, int(u[i, par]): -g.rampup_rate_V},
                    "<=", 0.0, f"rampup[{tag}]",
                )
                # ramp down / shut-down rate: v_prev - v_n <= B' z_n + B u_n
                b.add_row(
                    {int(v[i, par]): 1.0, vn: -1.0, zn: -g.shutdown_rate_Bp, un: -g.rampdown_rate_B},
                    "<=", 0.0, f"rampdown[{tag}]",
                )
            else:
                b.add_row({vn: 1.0, yn: -g.startup_rate_Vp}, "<=", v0 + g.rampup_rate_V * u0, f"rampup[{tag}]")
                b.add_row({vn: -1.0, zn: -g.shutdown_rate_Bp, un: -g.rampdown_rate_B}, "<=", -v0, f"rampdown[{tag}]")

    for n in range(N):
        b.add_row({int(v[i, n]): 1.0 for i in range(I)}, ">=", float(tree.demand[n]), f"demand[{n}]")

    if fixed:
        _add_fixings(b, fixed, u, v, y, z, inst)

    # stage cost expressions
    cost_rows: list[dict[int, float]] = []
    for n in range(N):
        expr: dict[int, float] = {}
        for i, g in enumerate(inst.generators):
            pc = pieces[i]
            ui = int(u[i, n])
            expr[ui] = expr.get(ui, 0.0) + g.fixed_cost_a + pc.base
            if not pc.degenerate:
                for k in range(pc.K):
                    expr[int(seg[i, n, k])] = pc.slopes[k]
            for var, coef in ((int(y[i, n]), g.startup_cost_SU), (int(z[i, n]), g.shutdown_cost_SD)):
                if coef:
                    expr[var] = expr.get(var, 0.0) + coef
        cost_rows.append(expr)

    theta = np.full(N, -1, dtype=np.int64)
    if mode == DETERMINISTIC or spec.kind == "expectation":
        for n in range(N):
            w = float(tree.path_prob[n])
            for var, coef in cost_rows[n].items():
                b.add_obj(var, w * coef)
    else:
        _add_epigraph(b, tree, spec, cost_rows, theta)

    return ModelArtifacts(b.build(), mode, inst, tree, spec, u, y, z, v, seg, theta, pieces)


def _add_fixings(b: ModelBuilder, fixed: FixedDecisions, u, v, y, z, inst: Instance) -> None:
    seen: set[int] = set()
    for fam, arr, table in (("u", fixed.u, u), ("y", fixed.y, y), ("z", fixed.z, z), ("v", fixed.v, v)):
        for n, vals in arr.items():
            for i in range(inst.n_generators):
                var = int(table[i, n])
                if var in seen:
                    continue
                seen.add(var)
                val = float(vals[i])
                if fam != "v":
                    val = float(round(val))
                b.add_row({var: 1.0}, "=", val, f"fix_{fam}[{_gen_label(inst, i)},{n}]")


def _add_epigraph(b: ModelBuilder, tree: ScenarioTree, spec: RiskSpec, cost_rows, theta) -> None:
    lam = spec.effective_lambda
    N = tree.n_nodes
    for n in range(N):
        theta[n] = b.add_var(f"theta[{n}]", CONTINUOUS, -np.inf, np.inf)
    for n in range(N):
        kids = tree.children(n)
        row = {int(theta[n]): 1.0}
        for var, coef in cost_rows[n].items():
            row[var] = row.get(var, 0.0) - coef
        if kids.size:
            mn = b.add_var(f"m[{n}]", CONTINUOUS, -np.inf, np.inf)
            mean_row = {mn: 1.0}
            for c in kids:
                p = float(tree.cond_prob[c])
                mean_row[int(theta[c])] = -p
                sc = b.add_var(f"s[{int(c)}]", CONTINUOUS, 0.0, np.inf)
                b.add_row({sc: 1.0, int(theta[c]): -1.0, mn: 1.0}, ">=", 0.0, f"upside[{int(c)}]")
                row[sc] = -lam * p
            b.add_row(mean_row, "=", 0.0, f"mean[{n}]")
            row[mn] = -1.0
        b.add_row(row, "=", 0.0, f"risk[{n}]")
    b.add_obj(int(theta[0]), 1.0)


def build_deterministic(inst: Instance, demand_path, K: int = DEFAULT_PIECES) -> ModelArtifacts:
    """Single-scenario model on ``demand_path`` (length T)."""
    if len(demand_path) != inst.horizon_T:
        raise ValueError(f"demand path has length {len(demand_path)}, horizon is {inst.horizon_T}")
    return _build(inst, chain_tree(demand_path), RiskSpec.expectation(), DETERMINISTIC, K)


def build_ms(
    inst: Instance, tree: ScenarioTree, spec: RiskSpec, K: int = DEFAULT_PIECES, fixed: FixedDecisions | None = None
) -> ModelArtifacts:
    """Multi-stage model: every decision adapts to the node reached."""
    return _build(inst, tree, spec, MULTI_STAGE, K, fixed)


def build_ts(
    inst: Instance, tree: ScenarioTree, spec: RiskSpec, K: int = DEFAULT_PIECES, fixed: FixedDecisions | None = None
) -> ModelArtifacts:
    """Two-stage model: commitment schedule fixed per period, dispatch per node."""
    return _build(inst, tree, spec, TWO_STAGE, K, fixed)


# ---------------------------------------------------------------------------
# policy extraction
# ---------------------------------------------------------------------------


@dataclass
class Policy:
    """Node-indexed decisions; arrays are ``(I, n_nodes)``."""

    u: np.ndarray
    v: np.ndarray
    y: np.ndarray
    z: np.ndarray
    mode: str
    provenance: str = "external"

    @property
    def n_nodes(self) -> int:
        return self.u.shape[1]

    def dump(self, inst: Instance, tree: ScenarioTree) -> str:
        """Tab-separated rows: node_id period gen u v y z."""
        lines = []
        for n in range(self.n_nodes):
            for i, g in enumerate(inst.generators):
                lines.append(
                    f"{n}\t{tree.period[n]}\t{g.id}\t{int(self.u[i, n])}\t{self.v[i, n]:.10g}"
                    f"\t{int(self.y[i, n])}\t{int(self.z[i, n])}"
                )
        return "\n".join(lines) + "\n"

    def to_fixed(self, nodes, remap: Mapping[int, int] | None = None) -> FixedDecisions:
        """Pin this policy's decisions at ``nodes``; ``remap`` maps them to another tree's ids."""
        fx = FixedDecisions()
        for n in nodes:
            key = remap[n] if remap is not None else n
            fx.set(key, self.u[:, n], self.v[:, n], self.y[:, n], self.z[:, n])
        return fx


def _binary(vals: np.ndarray, what: str) -> np.ndarray:
    r = np.round(vals)
    bad = np.abs(vals - r) > BINARY_TOL
    if bad.any():
        raise ExtractionError(f"{what} has non-integral value {vals[bad][0]!r}")
    return r


def extract_policy(art: ModelArtifacts, sol: MilpSolution, tree: ScenarioTree | None = None) -> Policy:
    if sol.x is None:
        raise ExtractionError(f"solution has no point (status {sol.status})")
    tree = tree or art.tree
    if tree.n_nodes != art.tree.n_nodes:
        raise ExtractionError("tree does not match the model")
    x = sol.x
    u = _binary(x[art.u], "u")
    y = _binary(x[art.y], "y")
    z = _binary(x[art.z], "z")
    v = np.maximum(x[art.v], 0.0)
    provenance = {TWO_STAGE: "ts", MULTI_STAGE: "ms", DETERMINISTIC: "deterministic"}[art.mode]
    return Policy(u, v, y, z, art.mode, provenance)


@dataclass
class SolvedModel:
    art: ModelArtifacts
    sol: MilpSolution
    policy: Policy | None  # on the caller's tree; None when the solver found no point
    merged_nodes: int  # nodes removed by lumping identical siblings


def solve_model(
    inst: Instance,
    tree: ScenarioTree,
    spec: RiskSpec,
    mode: str,
    opts: SolveOptions | None = None,
    K: int = DEFAULT_PIECES,
    merge: bool = True,
) -> SolvedModel:
    """Build and solve the TS or MS model, optionally on the sibling-lumped tree.

    Lumping never changes the optimum; it removes the symmetric copies that
    make degenerate trees hard for branch and bound. The policy is mapped
    back onto ``tree``.
    """
    build = {TWO_STAGE: build_ts, MULTI_STAGE: build_ms}[mode]
    small, rep = merge_identical_siblings(tree) if merge else (tree, np.arange(tree.n_nodes))
    art = build(inst, small, spec, K)
    sol = solve(art.model, opts)
    pol = None
    if sol.x is not None:
        p = extract_policy(art, sol)
        pol = Policy(p.u[:, rep], p.v[:, rep], p.y[:, rep], p.z[:, rep], p.mode, p.provenance)
    return SolvedModel(art, sol, pol, tree.n_nodes - small.n_nodes)
