"""Solver backends and the common ``solve`` entry point.

Two backends ship with the package:

``highs``
    scipy's HiGHS branch-and-cut (``scipy.optimize.milp``). Default.
``bnb``
    A self-contained branch-and-bound over the binaries whose LP relaxations
    are solved by a dense two-phase tableau simplex (``rauc.kernels``). Meant
    for small models and for running without any external solver.

Every solution reported optimal is re-checked against the model rows, bounds
and integrality before it is returned.
"""

from __future__ import annotations

import dataclasses
import heapq
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from .model import EQ, GE, LE, MilpModel

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
GAP_LIMIT = "gap_limit"
TIME_LIMIT = "time_limit"

FEAS_TOL = 1e-6
INT_TOL = 1e-6
DEFAULT_REL_GAP = 1e-6


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    rel_gap: float = DEFAULT_REL_GAP
    time_limit_s: float | None = None
    backend: str | None = None
    node_limit: int = 200_000
    verbose: bool = False


@dataclass
class MilpSolution:
    status: str
    objective: float
    x: np.ndarray | None
    rel_gap: float
    wall_time: float
    backend: str
    model: MilpModel | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def value(self, name: str) -> float:
        return float(self.x[self.model.index(name)])

    def by_name(self) -> dict[str, float]:
        return dict(zip(self.model.var_names, map(float, self.x)))


def resolve_backend(name: str | None) -> str:
    name = name or os.environ.get("RAUC_SOLVER") or "highs"
    name = name.lower()
    if name not in BACKENDS:
        raise SolverError(f"unknown solver backend {name!r}; available: {sorted(BACKENDS)}")
    return name


def solve(model: MilpModel, opts: SolveOptions | None = None, **kw) -> MilpSolution:
    """Solve ``model`` with the configured backend and verify the result."""
    if opts is None:
        opts = SolveOptions(**kw)
    elif kw:
        opts = dataclasses.replace(opts, **kw)
    backend = resolve_backend(opts.backend)
    t0 = time.perf_counter()
    sol = BACKENDS[backend](model, opts)
    sol.wall_time = time.perf_counter() - t0
    sol.backend = backend
    sol.model = model
    if sol.x is not None and sol.status in (OPTIMAL, GAP_LIMIT, TIME_LIMIT):
        bad = check_feasibility(model, sol.x)
        if bad:
            raise SolverError(f"{backend} returned an infeasible point: " + "; ".join(bad[:5]))
        sol.objective = model.objective_value(sol.x)
    return sol


def check_feasibility(model: MilpModel, x, tol: float = FEAS_TOL) -> list[str]:
    """List every row, bound or integrality violation beyond ``tol`` (row-scaled)."""
    x = np.asarray(x, dtype=float)
    out: list[str] = []
    ax = model.A @ x
    A = abs(model.A)
    scale = np.maximum(1.0, A.max(axis=1).toarray().ravel()) if model.n_rows else np.ones(0)
    senses = np.asarray(model.senses)
    viol = np.zeros(model.n_rows)
    le = senses == LE
    ge = senses == GE
    eq = senses == EQ
    viol[le] = ax[le] - model.rhs[le]
    viol[ge] = model.rhs[ge] - ax[ge]
    viol[eq] = np.abs(ax[eq] - model.rhs[eq])
    for r in np.flatnonzero(viol / scale > tol):
        out.append(f"row {model.row_names[r]} violated by {viol[r]:.3g}")
    for j in np.flatnonzero((x < model.lb - tol) | (x > model.ub + tol)):
        out.append(f"variable {model.var_names[j]}={x[j]:.6g} outside [{model.lb[j]}, {model.ub[j]}]")
    frac = np.abs(x - np.round(x))
    for j in np.flatnonzero(model.is_binary & (frac > INT_TOL)):
        out.append(f"binary {model.var_names[j]}={x[j]:.6g} not integral")
    return out


# ---------------------------------------------------------------------------
# HiGHS via scipy
# ---------------------------------------------------------------------------


def _solve_highs(model: MilpModel, opts: SolveOptions) -> MilpSolution:
    from scipy.optimize import Bounds, LinearConstraint, milp

    lo, hi = model.row_bounds()
    constraints = [LinearConstraint(model.A, lo, hi)] if model.n_rows else []
    options = {"mip_rel_gap": opts.rel_gap, "disp": opts.verbose, "presolve": True}
    if opts.time_limit_s:
        options["time_limit"] = float(opts.time_limit_s)
    res = milp(
        model.c,
        constraints=constraints,
        integrality=model.is_binary.astype(int),
        bounds=Bounds(model.lb, model.ub),
        options=options,
    )
    gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
    x = None if res.x is None else np.asarray(res.x, dtype=float)
    if x is not None:
        x = np.where(model.is_binary, np.round(x), x)
    if res.status == 0:
        status = OPTIMAL if gap <= opts.rel_gap * (1 + 1e-9) else GAP_LIMIT
    elif res.status == 2:
        status = INFEASIBLE
    elif res.status == 3:
        status = UNBOUNDED
    elif res.status == 1:
        status = TIME_LIMIT
    else:
        raise SolverError(f"HiGHS failed: {res.message}")
    obj = float(res.fun + model.offset) if res.fun is not None else float("nan")
    return MilpSolution(status, obj, x, gap, 0.0, "highs")


# ---------------------------------------------------------------------------
# dense LP + branch-and-bound fallback
# ---------------------------------------------------------------------------


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    fun: float


def solve_lp_dense(c, A, senses, rhs, lb, ub, max_iter: int = 50_000) -> LPResult:
    """Solve ``min c x`` over linear rows and bounds with the tableau simplex."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    n = c.size
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if np.any(lb > ub + 1e-12):
        return LPResult(INFEASIBLE, None, np.inf)

    # x = shift + D @ y with y >= 0: finite lb -> y = x - lb; otherwise split
    cols = []
    shift = np.zeros(n)
    for j in range(n):
        if np.isfinite(lb[j]):
            shift[j] = lb[j]
            cols.append((j, 1.0))
        elif np.isfinite(ub[j]):
            shift[j] = ub[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ny = len(cols)
    D = np.zeros((n, ny))
    for k, (j, s) in enumerate(cols):
        D[j, k] = s

    rows = [A @ D] if A.size else []
    sen = list(senses)
    b = list(np.asarray(rhs, dtype=float) - (A @ shift if A.size else 0.0))
    extra = []
    for j in range(n):
        if np.isfinite(lb[j]) and np.isfinite(ub[j]):
            extra.append((j, ub[j] - lb[j]))
    if extra:
        E = np.zeros((len(extra), ny))
        for r, (j, cap) in enumerate(extra):
            k = next(k for k, (jj, _) in enumerate(cols) if jj == j)
            E[r, k] = 1.0
        rows.append(E)
        sen += [LE] * len(extra)
        b += [cap for _, cap in extra]
    M = np.vstack(rows) if rows else np.zeros((0, ny))
    b = np.asarray(b, dtype=float)
    m = M.shape[0]
    cy = D.T @ c

    n_slack = sum(1 for s in sen if s != EQ)
    # columns: y | slacks | artificials | rhs
    tab = np.zeros((m + 1, ny + n_slack + m + 1))
    tab[:m, :ny] = M
    k = ny
    for i, s in enumerate(sen):
        if s == LE:
            tab[i, k] = 1.0
            k += 1
        elif s == GE:
            tab[i, k] = -1.0
            k += 1
    tab[:m, -1] = b
    neg = tab[:m, -1] < 0
    tab[:m][neg] *= -1.0
    n_real = ny + n_slack
    tab[:m, n_real : n_real + m] = np.eye(m)
    basis = np.arange(n_real, n_real + m, dtype=np.int64)

    # phase 1
    tab[m, :] = 0.0
    tab[m, :n_real] = -tab[:m, :n_real].sum(axis=0)
    tab[m, -1] = -tab[:m, -1].sum()
    status, _ = kernels.simplex_iterate(tab, basis, n_real, max_iter)
    if status == 2:
        raise SolverError("simplex iteration limit in phase 1")
    if -tab[m, -1] > 1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
        return LPResult(INFEASIBLE, None, np.inf)

    # drive zero-level artificials out of the basis; drop redundant rows
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= n_real:
            cand = np.flatnonzero(np.abs(tab[i, :n_real]) > 1e-9)
            if cand.size == 0:
                keep[i] = False
                continue
            col = int(cand[0])
            tab[i] /= tab[i, col]
            f = tab[:, col].copy()
            f[i] = 0.0
            tab -= np.outer(f, tab[i])
            basis[i] = col
    if not keep.all():
        tab = np.vstack([tab[:m][keep], tab[m:]])
        basis = basis[keep]
        m = int(keep.sum())

    # phase 2
    tab[m, :] = 0.0
    tab[m, :ny] = cy
    for i in range(m):
        f = tab[m, basis[i]]
        if f != 0.0:
            tab[m] -= f * tab[i]
    tab = np.ascontiguousarray(tab)
    status, _ = kernels.simplex_iterate(tab, basis, n_real, max_iter)
    if status == 1:
        return LPResult(UNBOUNDED, None, -np.inf)
    if status == 2:
        raise SolverError("simplex iteration limit in phase 2")
    y = np.zeros(tab.shape[1] - 1)
    y[basis] = tab[:m, -1]
    x = shift + D @ y[:ny]
    return LPResult(OPTIMAL, x, float(c @ x))


def _solve_bnb(model: MilpModel, opts: SolveOptions) -> MilpSolution:
    A = model.A.toarray()
    senses = model.senses
    bins = np.flatnonzero(model.is_binary)
    t0 = time.perf_counter()

    def relax(lb, ub):
        return solve_lp_dense(model.c, A, senses, model.rhs, lb, ub)

    root = relax(model.lb.copy(), model.ub.copy())
    if root.status == UNBOUNDED:
        return MilpSolution(UNBOUNDED, -np.inf, None, np.inf, 0.0, "bnb")
    if root.status == INFEASIBLE:
        return MilpSolution(INFEASIBLE, np.inf, None, np.inf, 0.0, "bnb")

    best_x = None
    best = np.inf
    counter = 0
    heap = [(root.fun, counter, model.lb.copy(), model.ub.copy(), root)]
    nodes = 0
    status = OPTIMAL
    while heap:
        bound = heap[0][0]
        if best_x is not None and best - bound <= opts.rel_gap * max(1.0, abs(best)):
            break
        if nodes >= opts.node_limit or (opts.time_limit_s and time.perf_counter() - t0 > opts.time_limit_s):
            status = GAP_LIMIT if nodes >= opts.node_limit else TIME_LIMIT
            break
        fun, _, lb, ub, lp = heapq.heappop(heap)
        nodes += 1
        if fun >= best:
            continue
        frac = np.abs(lp.x[bins] - np.round(lp.x[bins]))
        if bins.size == 0 or frac.max() <= INT_TOL:
            x = lp.x.copy()
            x[bins] = np.round(x[bins])
            best, best_x = fun, x
            continue
        j = int(bins[np.argmax(frac)])
        for val in (np.floor(lp.x[j]), np.ceil(lp.x[j])):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = val
            child = relax(clb, cub)
            if child.status == OPTIMAL and child.fun < best:
                counter += 1
                heapq.heappush(heap, (child.fun, counter, clb, cub, child))

    if best_x is None:
        return MilpSolution(INFEASIBLE if status == OPTIMAL else status, np.inf, None, np.inf, 0.0, "bnb")
    lower = min([h[0] for h in heap], default=best)
    gap = max(0.0, (best - lower) / max(1.0, abs(best))) if heap else 0.0
    log.debug("bnb explored %d nodes", nodes)
    return MilpSolution(status, best + model.offset, best_x, gap, 0.0, "bnb")


BACKENDS = {"highs": _solve_highs, "bnb": _solve_bnb}
