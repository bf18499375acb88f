"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 solver failure, 3 validation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .instance import InstanceError, bundled_path, load_instance, validate_instance
from .milp import SolveOptions, SolverError, export_lp_text
from .milp.solve import DEFAULT_REL_GAP, resolve_backend
from .policy import EVERY_PERIOD, REVELATION, PolicyError, RollingOptions, rolling_horizon
from .risk import RiskSpec
from .scenario_tree import build_tree
from .ucmodel import DEFAULT_PIECES, MULTI_STAGE, TWO_STAGE, build_ms, build_ts, solve_model

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_INVALID = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


@dataclass
class RunConfig:
    instance: str
    command: str
    epsilon: float | None = None
    lam: float = 0.0
    eps_grid: tuple[float, ...] = analysis.DEFAULT_EPS_GRID
    lambda_grid: tuple[float, ...] = analysis.DEFAULT_LAMBDA_GRID
    backend: str = "highs"
    rel_gap: float = DEFAULT_REL_GAP
    time_limit_s: float | None = None
    output_dir: str | None = None
    cache_dir: str | None = None
    workers: int = 1
    seed: int = 0
    pieces: int = DEFAULT_PIECES
    extra: dict = field(default_factory=dict)

    def check(self) -> None:
        if not Path(self.instance).exists():
            raise UsageError(f"instance file not found: {self.instance}")
        if not 0.0 < self.rel_gap <= 0.1:
            raise UsageError(f"rel_gap must lie in (0, 0.1], got {self.rel_gap}")
        if not self.eps_grid or not self.lambda_grid:
            raise UsageError("grids must be nonempty")
        if self.workers < 1:
            raise UsageError("workers must be >= 1")

    def solver_options(self) -> SolveOptions:
        return SolveOptions(rel_gap=self.rel_gap, time_limit_s=self.time_limit_s, backend=self.backend)


def parse_grid(text: str) -> tuple[float, ...]:
    """``start:stop:step`` (inclusive) or a comma list."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return tuple(round(start + k * step, 10) for k in range(max(n, 0)))
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; use start:stop:step or a,b,c") from None


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rauc", description="Risk-averse stochastic unit commitment: two-stage vs multi-stage.")
    p.add_argument("--config", help="JSON config file (flags win over it)")
    p.add_argument("--json", action="store_true", help="emit one JSON object on stdout")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, point=True):
        sp.add_argument("--instance", help="instance JSON (default: bundled 10-unit fleet)")
        sp.add_argument("--backend", help="solver backend: highs or bnb")
        sp.add_argument("--rel-gap", type=float)
        sp.add_argument("--time-limit", type=float)
        sp.add_argument("--pieces", type=int)
        if point:
            sp.add_argument("--epsilon", type=float)
            sp.add_argument("--lambda", dest="lam", type=float)

    v = sub.add_parser("validate", help="check an instance file")
    v.add_argument("path", nargs="?", help="instance JSON (bare names resolve to bundled data)")

    for name in ("solve-ts", "solve-ms"):
        s = sub.add_parser(name, help=f"solve the {'two' if name == 'solve-ts' else 'multi'}-stage model")
        common(s)
        s.add_argument("--dump-policy", help="write the node policy (tab-separated)")
        s.add_argument("--dump-lp", help="write the model in LP text format")
        s.add_argument("--dump-symbols", help="write the variable symbol table (JSON)")

    r = sub.add_parser("rolling-horizon", help="build the rolling-horizon policy")
    common(r)
    r.add_argument("--z-ms", type=float, help="multi-stage optimum to compare against (solved if absent)")
    r.add_argument("--schedule", choices=(REVELATION, EVERY_PERIOD), default=REVELATION)
    r.add_argument("--dump-policy")

    b = sub.add_parser("bounds", help="VMS interval and approximations")
    common(b)
    b.add_argument("--enforce", action="store_true", help="require the bound assumptions")
    b.add_argument("--delta", type=float, help="noise half-width for the closed-form approximation")

    for name in ("sweep", "paper-repro"):
        s = sub.add_parser(name, help="epsilon-lambda grid" if name == "sweep" else "default grid on the bundled fleet")
        common(s, point=False)
        if name == "sweep":
            s.add_argument("--eps", type=parse_grid, help="epsilon grid, e.g. 0.1:0.5:0.1")
            s.add_argument("--lambda", dest="lam_grid", type=parse_grid, help="lambda grid, e.g. 0:0.5:0.1")
        s.add_argument("--out", help="output directory")
        s.add_argument("--cache", help="cell cache directory")
        s.add_argument("--workers", type=int)
    return p


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    return doc


def _resolve_instance(name: str | None) -> str:
    if not name:
        return str(bundled_path())
    if not Path(name).exists() and bundled_path(Path(name).name).exists():
        return str(bundled_path(Path(name).name))
    return name


def build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then config file, then environment, then flags."""
    doc = _load_config(args.config)
    solver = doc.get("solver", {}) or {}
    cfg = RunConfig(instance=_resolve_instance(doc.get("instance")), command=args.command)
    cfg.backend = solver.get("backend", cfg.backend)
    cfg.rel_gap = float(solver.get("rel_gap", cfg.rel_gap))
    cfg.time_limit_s = solver.get("time_limit_s", cfg.time_limit_s)
    cfg.output_dir = doc.get("output_dir")
    cfg.cache_dir = doc.get("cache_dir")
    cfg.workers = int(doc.get("workers", cfg.workers))
    cfg.seed = int(doc.get("seed", cfg.seed))
    cfg.pieces = int(doc.get("pieces", cfg.pieces))
    if "epsilon" in doc:
        cfg.epsilon = float(doc["epsilon"])
    if "lambda" in doc:
        cfg.lam = float(doc["lambda"])
    if "eps_grid" in doc:
        cfg.eps_grid = tuple(float(x) for x in doc["eps_grid"])
    if "lambda_grid" in doc:
        cfg.lambda_grid = tuple(float(x) for x in doc["lambda_grid"])
    if os.environ.get("RAUC_SOLVER"):
        cfg.backend = os.environ["RAUC_SOLVER"]

    flags = vars(args)
    if flags.get("instance"):
        cfg.instance = _resolve_instance(flags["instance"])
    if flags.get("path"):
        cfg.instance = _resolve_instance(flags["path"])
    for flag, attr in (("backend", "backend"), ("rel_gap", "rel_gap"), ("time_limit", "time_limit_s"),
                       ("pieces", "pieces"), ("epsilon", "epsilon"), ("lam", "lam"), ("eps", "eps_grid"),
                       ("lam_grid", "lambda_grid"), ("out", "output_dir"), ("cache", "cache_dir"),
                       ("workers", "workers")):
        if flags.get(flag) is not None:
            setattr(cfg, attr, flags[flag])
    try:
        cfg.backend = resolve_backend(cfg.backend)
    except SolverError as exc:
        raise UsageError(str(exc)) from None
    cfg.check()
    return cfg


class _Out:
    """Routes human text to stdout, or to stderr when a JSON document is requested."""

    def __init__(self, as_json: bool):
        self.as_json = as_json

    def say(self, text: str = "") -> None:
        print(text, file=sys.stderr if self.as_json else sys.stdout)

    def note(self, text: str) -> None:
        print(text, file=sys.stderr)

    def emit(self, doc: dict) -> None:
        if self.as_json:
            print(json.dumps(doc, sort_keys=True, default=_jsonable))


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _write(path: str, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_validate(cfg: RunConfig, out: _Out) -> int:
    inst = load_instance(cfg.instance)
    rep = validate_instance(inst)
    out.say(str(rep))
    out.emit({"instance": cfg.instance, "violations": len(rep), "errors": rep.errors, "warnings": rep.warnings})
    return EXIT_OK if rep.ok else EXIT_INVALID


def _point(cfg: RunConfig):
    inst = load_instance(cfg.instance)
    rep = validate_instance(inst)
    if not rep.ok:
        raise InstanceError(str(rep))
    eps = inst.scenario_spec.epsilon if cfg.epsilon is None else cfg.epsilon
    return inst, build_tree(inst, eps), eps, RiskSpec.musd(cfg.lam)


def cmd_solve(cfg: RunConfig, out: _Out, mode: str) -> int:
    inst, tree, eps, spec = _point(cfg)
    args = cfg.extra
    if args.get("dump_lp") or args.get("dump_symbols"):
        # the exported model is always the one on the full tree
        art = (build_ts if mode == "ts" else build_ms)(inst, tree, spec, cfg.pieces)
        if args.get("dump_lp"):
            _write(args["dump_lp"], export_lp_text(art.model))
        if args.get("dump_symbols"):
            _write(args["dump_symbols"], art.symbol_table_json())
    run = solve_model(inst, tree, spec, TWO_STAGE if mode == "ts" else MULTI_STAGE, cfg.solver_options(), cfg.pieces)
    sol, art = run.sol, run.art
    doc = {
        "model": mode, "epsilon": eps, "lambda": cfg.lam, "status": sol.status, "objective": sol.objective,
        "rel_gap": sol.rel_gap, "wall_time_s": sol.wall_time, "backend": sol.backend,
        "binaries": art.n_binaries, "variables": art.model.n_vars, "rows": art.model.n_rows,
        "merged_nodes": run.merged_nodes,
    }
    if run.policy is None:
        out.say(f"{mode}: solver status {sol.status}")
        out.emit(doc)
        return EXIT_SOLVER
    if args.get("dump_policy"):
        _write(args["dump_policy"], run.policy.dump(inst, tree))
    merged = f", {run.merged_nodes} identical nodes lumped" if run.merged_nodes else ""
    out.say(f"z_{mode} = {sol.objective:.6f}  ({sol.status}, gap {sol.rel_gap:.2e}, {sol.wall_time:.2f}s,"
            f" {art.n_binaries} binaries{merged})")
    out.emit(doc)
    return EXIT_OK if sol.ok else EXIT_SOLVER


def cmd_rolling(cfg: RunConfig, out: _Out) -> int:
    inst, tree, eps, spec = _point(cfg)
    args = cfg.extra
    res = rolling_horizon(inst, tree, spec, RollingOptions(cfg.solver_options(), args["schedule"], cfg.pieces))
    z_ms = args.get("z_ms")
    if z_ms is None:
        sol = solve_model(inst, tree, spec, MULTI_STAGE, cfg.solver_options(), cfg.pieces).sol
        if sol.x is None:
            out.say(f"multi-stage solve ended with status {sol.status}")
            return EXIT_SOLVER
        z_ms = sol.objective
    gap = res.z_rh - z_ms
    if args.get("dump_policy"):
        _write(args["dump_policy"], res.policy.dump(inst, tree))
    out.say(f"z_rh = {res.z_rh:.6f}  ({res.n_solves} solves, {res.wall_time:.2f}s)")
    out.say(f"z_ms = {z_ms:.6f}  GAP = {gap:.6f} ({100 * gap / z_ms:.4f}%)")
    out.emit({"epsilon": eps, "lambda": cfg.lam, "z_rh": res.z_rh, "z_ms": z_ms, "gap_abs": gap,
              "gap_pct": 100 * gap / z_ms, "solves": res.n_solves, "wall_time_s": res.wall_time,
              "schedule": args["schedule"]})
    return EXIT_OK


def cmd_bounds(cfg: RunConfig, out: _Out) -> int:
    inst, tree, eps, spec = _point(cfg)
    lo, hi = analysis.theorem1_bounds(inst, tree, spec, enforce_assumptions=cfg.extra.get("enforce", False))
    b = analysis.bound_inputs(inst, tree, spec)
    band = analysis.approx_almost(b.alpha_star_lower, b.alpha_star_upper, b.D_max, b.rho_D)
    doc = {
        "epsilon": eps, "lambda": cfg.lam, "alpha_lower": b.alpha_star_lower, "alpha_upper": b.alpha_star_upper,
        "D_max": b.D_max, "rho_D": b.rho_D, "bound_lo": lo, "bound_hi": hi,
        "certified": bool(cfg.extra.get("enforce")), "approx_band": list(band),
    }
    out.say(f"alpha in [{b.alpha_star_lower:.6f}, {b.alpha_star_upper:.6f}]  D_max {b.D_max:.4f}  rho(D) {b.rho_D:.4f}")
    out.say(f"VMS interval [{lo:.4f}, {hi:.4f}]" + ("" if doc["certified"] else "  (diagnostic, assumptions not checked)"))
    out.say(f"approximation band: low {band[0]:.4f} mid {band[1]:.4f} high {band[2]:.4f}")
    delta = cfg.extra.get("delta")
    if delta is not None:
        mid = 0.5 * (b.alpha_star_lower + b.alpha_star_upper)
        doc["approx_final_mid"] = analysis.approx_final(mid, inst.horizon_T, cfg.lam, delta)
        out.say(f"closed form at mid alpha, delta {delta:g}: {doc['approx_final_mid']:.4f}")
    out.emit(doc)
    return EXIT_OK


def _sweep(cfg: RunConfig, out: _Out, eps_grid, lam_grid) -> tuple[int, list, dict]:
    inst = load_instance(cfg.instance)
    rep = validate_instance(inst)
    if not rep.ok:
        raise InstanceError(str(rep))
    opts = analysis.SweepOptions(cfg.solver_options(), cfg.pieces, cfg.workers, cfg.cache_dir)

    def progress(c):
        status = c.error or (f"vms {c.vms_pct:.3f}% gap {c.gap_pct:.3f}%"
                             f" (ts {c.status_ts} {c.rel_gap_ts:.1e}, ms {c.status_ms} {c.rel_gap_ms:.1e})")
        out.note(f"cell eps={c.epsilon:g} lambda={c.lam:g}: {status}")

    cells = analysis.run_sweep(inst, eps_grid, lam_grid, opts, progress)
    csv_text = analysis.cells_to_csv(cells)
    summary = analysis.summarize(cells)
    files = {}
    if cfg.output_dir:
        d = Path(cfg.output_dir)
        _write(str(d / "results.csv"), csv_text)
        files["results"] = str(d / "results.csv")
        for c in cells:
            _write(str(d / "cells" / f"cell_e{c.epsilon:g}_l{c.lam:g}.json"), c.to_json())
        for name, text in analysis.timing_tables(cells).items():
            _write(str(d / f"{name}.csv"), text)
        _write(str(d / "summary.json"), json.dumps(summary, indent=1, sort_keys=True))
    else:
        out.say(csv_text.rstrip("\n"))
    failed = summary["failed"]
    return (EXIT_SOLVER if failed else EXIT_OK), cells, {"summary": summary, "files": files, "csv": csv_text}


def cmd_sweep(cfg: RunConfig, out: _Out) -> int:
    code, cells, info = _sweep(cfg, out, cfg.eps_grid, cfg.lambda_grid)
    out.emit({"cells": len(cells), "summary": info["summary"], "files": info["files"], "csv": info["csv"]})
    return code


def cmd_paper_repro(cfg: RunConfig, out: _Out) -> int:
    cfg.instance = str(bundled_path())
    code, cells, info = _sweep(cfg, out, analysis.DEFAULT_EPS_GRID, analysis.DEFAULT_LAMBDA_GRID)
    summary = info["summary"]
    out.say(analysis.format_summary(summary))
    out.emit({"cells": len(cells), "summary": summary, "files": info["files"], "csv": info["csv"]})
    return code


COMMANDS = {
    "validate": cmd_validate,
    "solve-ts": lambda c, o: cmd_solve(c, o, "ts"),
    "solve-ms": lambda c, o: cmd_solve(c, o, "ms"),
    "rolling-horizon": cmd_rolling,
    "bounds": cmd_bounds,
    "sweep": cmd_sweep,
    "paper-repro": cmd_paper_repro,
}


def _on_signal(signum, frame):
    # finished cells are already on disk (atomic writes); stop cleanly
    raise KeyboardInterrupt


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    out = _Out(args.json)
    try:
        cfg = build_config(args)
        cfg.extra = {k: v for k, v in vars(args).items()
                     if k in ("dump_policy", "dump_lp", "dump_symbols", "z_ms", "schedule", "enforce", "delta")}
        signal.signal(signal.SIGTERM, _on_signal)
        return COMMANDS[args.command](cfg, out)
    except UsageError as exc:
        print(f"rauc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InstanceError, analysis.AssumptionError) as exc:
        print(f"rauc: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, PolicyError) as exc:
        print(f"rauc: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except KeyboardInterrupt:
        print("rauc: interrupted; completed cells remain in the cache", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
