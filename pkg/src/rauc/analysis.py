"""Value of the multi-stage solution, its bounds and the (epsilon, lambda) sweep."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .instance import Generator, Instance, InitialState, ScenarioSpec, DemandProfile
from .milp import SolveOptions
from .milp.solve import resolve_backend
from .policy import RollingOptions, revelation_nodes, rolling_horizon
from .risk import RiskSpec, composite_risk
from .scenario_tree import ScenarioTree, build_tree
from .ucmodel import DEFAULT_PIECES, MULTI_STAGE, TWO_STAGE, solve_model

DEFAULT_EPS_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_LAMBDA_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)

CSV_COLUMNS = (
    "epsilon", "lambda", "z_ts", "z_ms", "z_rh", "vms_abs", "vms_pct", "gap_abs", "gap_pct",
    "bound_lo", "bound_hi", "time_ts_s", "time_ms_s", "time_rh_s",
)


# bump when the meaning of cached cell fields changes
CELL_FORMAT = 2


class AssumptionError(ValueError):
    def __init__(self, violations: list[tuple[int, str]]):
        self.assumptions = sorted({k for k, _ in violations})
        text = "; ".join(f"Assumption {k}: {msg}" for k, msg in violations)
        super().__init__(f"bound assumptions violated. {text}")


# ---------------------------------------------------------------------------
# bounds and approximations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundInputs:
    alpha_star_lower: float
    alpha_star_upper: float
    D_max: float
    rho_D: float


def alpha_coefficients(inst: Instance) -> tuple[float, float]:
    """Smallest and largest cost per MW any committed unit can incur."""
    gens = inst.generators
    if not gens:
        raise ValueError("instance has no generators")
    q_min = min(g.q_min for g in gens)
    if q_min <= 0:
        raise ValueError("upper coefficient undefined: some generator has q_min = 0")
    lo = min(g.fixed_cost_a + g.prod_cost_b * g.q_min for g in gens) / max(g.q_max for g in gens)
    hi = max(g.fixed_cost_a + g.prod_cost_b * g.q_max for g in gens) / q_min
    return lo, hi


def demand_max(tree: ScenarioTree) -> float:
    """Sum over periods of the largest node demand in that period."""
    return float(sum(tree.demand[tree.stage(t)].max() for t in range(tree.t0, tree.T + 1)))


def demand_risk(tree: ScenarioTree, spec: RiskSpec) -> float:
    """Composite risk of the demand process itself."""
    return composite_risk(tree, tree.demand, spec)


def assumption_violations(inst: Instance, tree: ScenarioTree) -> list[tuple[int, str]]:
    out: list[tuple[int, str]] = []
    d = tree.demand
    covering = [
        g for g in inst.generators
        if g.q_min <= d.min() and d.max() <= g.q_max and g.min_up_M == 0 and g.min_down_L == 0
        and min(g.startup_rate_Vp, g.rampup_rate_V, g.shutdown_rate_Bp, g.rampdown_rate_B) >= g.q_max
    ]
    if not covering:
        out.append((1, "no generator covers every node demand with free cycling and unlimited ramps"))
    if not np.all(np.isfinite(d)) or d.min() < 0:
        out.append((2, "demand must be finite and nonnegative"))
    for g in inst.generators:
        if g.prod_cost_c != 0 or g.startup_cost_SU != 0 or g.shutdown_cost_SD != 0:
            out.append((3, f"generator {g.id} has quadratic cost or start-up/shut-down cost"))
            break
    return out


def bound_inputs(inst: Instance, tree: ScenarioTree, spec: RiskSpec) -> BoundInputs:
    lo, hi = alpha_coefficients(inst)
    return BoundInputs(lo, hi, demand_max(tree), demand_risk(tree, spec))


def theorem1_bounds(
    inst: Instance, tree: ScenarioTree, spec: RiskSpec, enforce_assumptions: bool = True
) -> tuple[float, float]:
    """Interval for z_TS - z_MS; certified only when the assumptions hold."""
    if enforce_assumptions:
        bad = assumption_violations(inst, tree)
        if bad:
            raise AssumptionError(bad)
    b = bound_inputs(inst, tree, spec)
    lo = b.alpha_star_lower * b.D_max - b.alpha_star_upper * b.rho_D
    hi = b.alpha_star_upper * b.D_max - b.alpha_star_lower * b.rho_D
    return lo, hi


def approx_almost(alpha_lo: float, alpha_hi: float, D_max: float, rho_D: float) -> tuple[float, float, float]:
    """``alpha (D_max - rho_D)`` at the low, middle and high cost coefficient."""
    spread = D_max - rho_D
    return alpha_lo * spread, 0.5 * (alpha_lo + alpha_hi) * spread, alpha_hi * spread


def approx_final(alpha: float, T: int, lam: float, Delta: float) -> float:
    """Closed form for stage-wise uniform demand noise on ``[-Delta, Delta]``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    if Delta < 0:
        raise ValueError("Delta must be nonnegative")
    return alpha * T * (1.0 - lam / 4.0) * Delta


def uniform_fan_tree(stages: int, n_points: int, delta: float, base: float = 0.0) -> ScenarioTree:
    """Tree with a zero-demand root and ``stages`` random periods.

    Every node has ``n_points`` equally likely children whose demand is
    ``base`` plus an equi-spaced offset on ``[-delta, delta]``.
    """
    if stages < 1 or n_points < 1:
        raise ValueError("need at least one stage and one point")
    offsets = np.linspace(-delta, delta, n_points) if n_points > 1 else np.zeros(1)
    period = [np.zeros(1, dtype=np.int64)]
    parent = [np.full(1, -1, dtype=np.int64)]
    demand = [np.zeros(1)]
    first = 0
    width = 1
    for t in range(1, stages + 1):
        par = np.repeat(np.arange(first, first + width), n_points)
        period.append(np.full(par.size, t, dtype=np.int64))
        parent.append(par)
        demand.append(np.tile(base + offsets, width))
        first += width
        width *= n_points
    n = sum(p.size for p in period)
    cond = np.full(n, 1.0 / n_points)
    cond[0] = 1.0
    return ScenarioTree(
        np.concatenate(period) + 1, np.concatenate(parent), cond, np.concatenate(demand), check=False
    )


def uniform_fan_spread(stages: int, n_points: int, delta: float, lam: float) -> float:
    """``D_max - rho(D)`` on the uniform fan, per unit of cost coefficient."""
    tree = uniform_fan_tree(stages, n_points, delta)
    return demand_max(tree) - demand_risk(tree, RiskSpec.musd(lam))


# ---------------------------------------------------------------------------
# random instances satisfying the bound assumptions
# ---------------------------------------------------------------------------


def random_assumption_instance(rng: np.random.Generator, max_generators: int = 3) -> Instance:
    """Small linear-cost instance with a free-cycling generator covering all demand."""
    T = int(rng.integers(3, 6))
    n_branch = int(rng.integers(1, min(3, T - 1) + 1))
    branch = tuple(sorted(int(p) for p in rng.choice(np.arange(2, T + 1), n_branch, replace=False)))
    eps = float(rng.uniform(0.05, 0.5))
    base = rng.uniform(40, 120, T)
    d_lo, d_hi = base.min() * (1 - eps), base.max() * (1 + eps)

    gens = []
    q_min = float(rng.uniform(1, 0.9 * d_lo))
    q_max = float(d_hi * rng.uniform(1.0, 1.5))
    gens.append(_linear_gen(1, rng, q_min, q_max, free=True))
    for k in range(int(rng.integers(1, max_generators))):
        lo = float(rng.uniform(1, 40))
        hi = float(lo + rng.uniform(10, 80))
        gens.append(_linear_gen(k + 2, rng, lo, hi, free=False))
    prob = float(rng.uniform(0.2, 0.8))
    spec = ScenarioSpec(branch, eps, (prob, 1 - prob))
    return Instance(
        tuple(gens), DemandProfile(tuple(float(x) for x in base)), spec, T,
        InitialState.all_off(gens), name="assumptions-random",
    )


def _linear_gen(gid: int, rng: np.random.Generator, q_min: float, q_max: float, free: bool) -> Generator:
    ramp = q_max if free else float(rng.uniform(q_min, q_max))
    return Generator(
        id=gid,
        fixed_cost_a=float(rng.uniform(0, 500)),
        prod_cost_b=float(rng.uniform(10, 30)),
        prod_cost_c=0.0,
        q_min=q_min,
        q_max=q_max,
        startup_rate_Vp=q_max if free else float(rng.uniform(q_min, q_max)),
        rampup_rate_V=ramp,
        shutdown_rate_Bp=q_max if free else float(rng.uniform(q_min, q_max)),
        rampdown_rate_B=ramp,
        min_up_M=0 if free else int(rng.integers(0, 3)),
        min_down_L=0 if free else int(rng.integers(0, 3)),
        startup_cost_SU=0.0,
        shutdown_cost_SD=0.0,
    )


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepOptions:
    solver: SolveOptions = field(default_factory=SolveOptions)
    pieces: int = DEFAULT_PIECES
    workers: int = 1
    cache_dir: str | None = None
    reuse_root: bool = True


@dataclass
class CellResult:
    epsilon: float
    lam: float
    z_ts: float = math.nan
    z_ms: float = math.nan
    z_rh: float = math.nan
    vms_abs: float = math.nan
    vms_pct: float = math.nan
    gap_abs: float = math.nan
    gap_pct: float = math.nan
    bound_lo: float = math.nan
    bound_hi: float = math.nan
    time_ts_s: float = math.nan
    time_ms_s: float = math.nan
    time_rh_s: float = math.nan
    status_ts: str = ""
    status_ms: str = ""
    rel_gap_ts: float = math.nan
    rel_gap_ms: float = math.nan
    rel_gap_rh: float = math.nan
    rh_solves: int = 0
    rh_depth: int = 0
    rel_gap_target: float = math.nan
    ms_incumbent: str = ""  # which policy supplied z_ms
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error and self.status_ts == "optimal" and self.status_ms == "optimal"

    @property
    def vms_tol(self) -> float:
        """Slack from stopping both solves within their relative gaps."""
        g_ts = max(self.rel_gap_ts, self.rel_gap_target)
        g_ms = max(self.rel_gap_ms, self.rel_gap_target)
        return abs(self.z_ts) * g_ts + abs(self.z_ms) * g_ms

    @property
    def gap_tol(self) -> float:
        """As ``vms_tol`` plus the slack of each rolling-horizon level."""
        g_rh = max(self.rel_gap_rh, self.rel_gap_target)
        return self.vms_tol + self.rh_depth * abs(self.z_rh) * g_rh

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CellResult":
        doc = json.loads(text)
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in names})

    def csv_row(self) -> list[str]:
        vals = [getattr(self, "lam" if c == "lambda" else c) for c in CSV_COLUMNS]
        return [_fmt(v) for v in vals]


def _fmt(x: float) -> str:
    return "nan" if isinstance(x, float) and math.isnan(x) else repr(float(x))


def cell_key(inst: Instance, eps: float, lam: float, opts: SweepOptions) -> str:
    doc = {
        "instance": inst.fingerprint(),
        "epsilon": round(float(eps), 12),
        "lambda": round(float(lam), 12),
        "backend": resolve_backend(opts.solver.backend),
        "rel_gap": float(opts.solver.rel_gap),
        "time_limit_s": None if opts.solver.time_limit_s is None else float(opts.solver.time_limit_s),
        "pieces": opts.pieces,
        "format": CELL_FORMAT,
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:20]


def cell_path(cache_dir: str | Path, inst: Instance, eps: float, lam: float, opts: SweepOptions) -> Path:
    return Path(cache_dir) / f"cell_e{eps:g}_l{lam:g}_{cell_key(inst, eps, lam, opts)}.json"


def solve_cell(inst: Instance, eps: float, lam: float, opts: SweepOptions | None = None) -> CellResult:
    """Solve TS, MS and the rolling-horizon policy for one grid cell."""
    opts = opts or SweepOptions()
    cell = CellResult(float(eps), float(lam), rel_gap_target=opts.solver.rel_gap)
    spec = RiskSpec.musd(lam)
    try:
        tree = build_tree(inst, eps)
        cell.rh_depth = len({int(tree.period[n]) for n in revelation_nodes(tree)})
        lo, hi = theorem1_bounds(inst, tree, spec, enforce_assumptions=False)
        cell.bound_lo, cell.bound_hi = lo, hi

        ts_run = solve_model(inst, tree, spec, TWO_STAGE, opts.solver, opts.pieces)
        ts = ts_run.sol
        cell.status_ts, cell.z_ts, cell.rel_gap_ts, cell.time_ts_s = ts.status, ts.objective, ts.rel_gap, ts.wall_time
        ms = solve_model(inst, tree, spec, MULTI_STAGE, opts.solver, opts.pieces).sol
        cell.status_ms, cell.z_ms, cell.rel_gap_ms, cell.time_ms_s = ms.status, ms.objective, ms.rel_gap, ms.wall_time
        # a time-limited incumbent still counts; its gap widens the tolerances
        if ts.x is None or ms.x is None:
            raise RuntimeError(f"solver status ts={ts.status} ms={ms.status}")

        root = ts_run.policy if opts.reuse_root else None
        rh = rolling_horizon(inst, tree, spec, RollingOptions(opts.solver, pieces=opts.pieces), root_policy=root)
        cell.z_rh = rh.z_rh
        cell.rel_gap_rh = max(rh.max_rel_gap, ts.rel_gap if root is not None else 0.0)
        cell.rh_solves = rh.n_solves + (1 if root is not None else 0)
        cell.time_rh_s = rh.wall_time + (ts.wall_time if root is not None else 0.0)
        _best_ms_incumbent(cell, ms.objective, ms.rel_gap)

        cell.vms_abs = cell.z_ts - cell.z_ms
        cell.gap_abs = cell.z_rh - cell.z_ms
        cell.vms_pct = 100.0 * cell.vms_abs / cell.z_ms
        cell.gap_pct = 100.0 * cell.gap_abs / cell.z_ms
    except Exception as exc:  # recorded per cell, the sweep goes on
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


def _best_ms_incumbent(cell: CellResult, z_solver: float, gap_solver: float) -> None:
    """Take the cheapest known multistage-feasible value as z_ms.

    Two-stage and rolling-horizon policies are feasible multistage policies, so
    when the solver stopped early either can beat its incumbent.  The solver's
    dual bound is kept and the relative gap is restated against the new value.
    """
    lower = z_solver - gap_solver * abs(z_solver)
    best, source = min((z_solver, "solver"), (cell.z_ts, "two_stage"), (cell.z_rh, "rolling_horizon"))
    cell.ms_incumbent = source
    if source != "solver":
        cell.z_ms = best
        cell.rel_gap_ms = max(0.0, (best - lower) / abs(best))


def _cached_cell(args) -> CellResult:
    inst, eps, lam, opts = args
    path = cell_path(opts.cache_dir, inst, eps, lam, opts) if opts.cache_dir else None
    if path is not None and path.exists():
        return CellResult.from_json(path.read_text())
    cell = solve_cell(inst, eps, lam, opts)
    if path is not None and not cell.error:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(cell.to_json())
        tmp.replace(path)
    return cell


def run_sweep(
    inst: Instance,
    eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    opts: SweepOptions | None = None,
    progress=None,
) -> list[CellResult]:
    """All grid cells ordered by (epsilon, lambda); cached cells are reused."""
    if not len(eps_grid) or not len(lambda_grid):
        raise ValueError("grids must be nonempty")
    opts = opts or SweepOptions()
    jobs = [(inst, float(e), float(l), opts) for e in sorted(eps_grid) for l in sorted(lambda_grid)]
    if opts.workers > 1:
        with ProcessPoolExecutor(opts.workers) as pool:
            cells = list(pool.map(_cached_cell, jobs))
        if progress:
            for c in cells:
                progress(c)
        return cells
    cells = []
    for job in jobs:
        c = _cached_cell(job)
        if progress:
            progress(c)
        cells.append(c)
    return cells


def cells_to_csv(cells: Sequence[CellResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in cells:
        w.writerow(c.csv_row())
    return buf.getvalue()


def read_csv(text: str) -> list[dict[str, float]]:
    return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(text))]


# ---------------------------------------------------------------------------
# summary
# ---------------------------------------------------------------------------


def _trend_count(grid: np.ndarray, axis: int, increasing: bool, tol) -> tuple[int, int]:
    """Lines along ``axis`` that are monotone; neighbours may break the order by
    up to their summed ``tol`` (a scalar or one entry per cell)."""
    d = np.diff(grid, axis=axis)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), grid.shape)
    n = grid.shape[axis]
    pair = np.take(tol, range(n - 1), axis=axis) + np.take(tol, range(1, n), axis=axis)
    good = np.all(d >= -pair, axis=axis) if increasing else np.all(d <= pair, axis=axis)
    return int(good.sum()), int(good.size)


def summarize(cells: Sequence[CellResult]) -> dict:
    """Means, maxima and monotone-trend counts over a rectangular grid of cells."""
    ok = [c for c in cells if not c.error]
    out: dict = {"cells": len(cells), "failed": len(cells) - len(ok)}
    if not ok:
        return out
    vms = np.array([c.vms_pct for c in ok])
    gap = np.array([c.gap_pct for c in ok])
    out.update(
        vms_pct_mean=float(vms.mean()), vms_pct_max=float(vms.max()),
        gap_pct_mean=float(gap.mean()), gap_pct_max=float(gap.max()),
        time_ts_total_s=float(sum(c.time_ts_s for c in ok)),
        time_ms_total_s=float(sum(c.time_ms_s for c in ok)),
        time_rh_total_s=float(sum(c.time_rh_s for c in ok)),
        # cells whose TS or MS solve stopped on the time limit with an incumbent
        unproven=sum(1 for c in ok if not c.ok),
        rel_gap_ms_max=float(max(c.rel_gap_ms for c in ok)),
    )
    eps = sorted({c.epsilon for c in cells})
    lams = sorted({c.lam for c in cells})
    if len(ok) == len(eps) * len(lams):
        grid = np.full((len(eps), len(lams)), np.nan)
        tol = np.zeros_like(grid)
        for c in ok:
            i, j = eps.index(c.epsilon), lams.index(c.lam)
            grid[i, j] = c.vms_abs
            tol[i, j] = c.vms_tol
        out["vms_nondecreasing_in_eps"] = _trend_count(grid, 0, True, tol)
        out["vms_nonincreasing_in_lambda"] = _trend_count(grid, 1, False, tol)
        out["vms_nondecreasing_in_eps_strict"] = _trend_count(grid, 0, True, 0.0)
        out["vms_nonincreasing_in_lambda_strict"] = _trend_count(grid, 1, False, 0.0)
    return out


def format_summary(summary: dict) -> str:
    lines = [f"cells: {summary['cells']} (failed {summary['failed']})"]
    if "vms_pct_mean" in summary:
        lines.append(f"cells stopped before proving optimality: {summary['unproven']}"
                     f" (largest MS relative gap {summary['rel_gap_ms_max']:.2e})")
        lines.append(f"VMS(%): mean {summary['vms_pct_mean']:.3f} max {summary['vms_pct_max']:.3f}")
        lines.append(f"GAP(%): mean {summary['gap_pct_mean']:.3f} max {summary['gap_pct_max']:.3f}")
        lines.append(
            f"time (s): ts {summary['time_ts_total_s']:.1f} ms {summary['time_ms_total_s']:.1f}"
            f" rh {summary['time_rh_total_s']:.1f}"
        )
    for key, label in (("vms_nondecreasing_in_eps", "lambda columns with VMS nondecreasing in epsilon"),
                       ("vms_nonincreasing_in_lambda", "epsilon rows with VMS nonincreasing in lambda")):
        if key in summary:
            k, n = summary[key]
            strict = summary[key + "_strict"][0]
            lines.append(f"{label}: {k}/{n} within solver slack, {strict}/{n} strictly")
    return "\n".join(lines)


def timing_tables(cells: Sequence[CellResult]) -> dict[str, str]:
    """Per-model solve times as epsilon-by-lambda CSV tables."""
    eps = sorted({c.epsilon for c in cells})
    lams = sorted({c.lam for c in cells})
    lookup = {(c.epsilon, c.lam): c for c in cells}
    out = {}
    for attr in ("time_ts_s", "time_ms_s", "time_rh_s"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epsilon"] + [f"{l:g}" for l in lams])
        for e in eps:
            w.writerow([f"{e:g}"] + [f"{getattr(lookup[(e, l)], attr):.2f}" if (e, l) in lookup else "" for l in lams])
        out[attr] = buf.getvalue()
    return out


def vms_alpha_fit(cells: Sequence[CellResult], inst: Instance) -> list[dict]:
    """Band from the single-coefficient approximation next to each measured VMS."""
    lo, hi = alpha_coefficients(inst)
    rows = []
    for c in cells:
        tree = build_tree(inst, c.epsilon)
        b = bound_inputs(inst, tree, RiskSpec.musd(c.lam))
        band = approx_almost(lo, hi, b.D_max, b.rho_D)
        rows.append({"epsilon": c.epsilon, "lambda": c.lam, "vms_abs": c.vms_abs,
                     "band_low": band[0], "band_mid": band[1], "band_high": band[2]})
    return rows


__all__ = [
    "AssumptionError", "BoundInputs", "CellResult", "SweepOptions", "CSV_COLUMNS",
    "DEFAULT_EPS_GRID", "DEFAULT_LAMBDA_GRID", "alpha_coefficients", "approx_almost",
    "approx_final", "assumption_violations", "bound_inputs", "cell_path", "cells_to_csv",
    "demand_max", "demand_risk", "format_summary", "random_assumption_instance", "read_csv",
    "run_sweep", "solve_cell", "summarize", "theorem1_bounds", "timing_tables",
    "uniform_fan_spread", "uniform_fan_tree", "vms_alpha_fit",
]
