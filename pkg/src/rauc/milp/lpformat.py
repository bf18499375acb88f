"""Deterministic export in the common "LP file" text format."""

from __future__ import annotations

import numpy as np

from .model import EQ, GE, LE, MilpModel

_TERMS_PER_LINE = 6


def _num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _expr(names, idx, vals) -> list[str]:
    parts = []
    for k, (j, a) in enumerate(zip(idx, vals)):
        sign = "-" if a < 0 else "+"
        mag = abs(a)
        coef = "" if mag == 1 else _num(mag) + " "
        if k == 0:
            parts.append(f"{'- ' if a < 0 else ''}{coef}{names[j]}")
        else:
            parts.append(f"{sign} {coef}{names[j]}")
    if not parts:
        parts = ["0 " + names[0]] if names else ["0"]
    return [" ".join(parts[i : i + _TERMS_PER_LINE]) for i in range(0, len(parts), _TERMS_PER_LINE)]


def export_lp_text(model: MilpModel) -> str:
    """Render the model; identical models produce identical bytes."""
    names = model.var_names
    out = [f"\\ {model.name}", "Minimize"]
    nz = np.flatnonzero(model.c)
    lines = _expr(names, nz, model.c[nz])
    if model.offset:
        lines[-1] += f" + {_num(model.offset)} __const"
    out.append(" obj: " + lines[0])
    out.extend("   " + ln for ln in lines[1:])

    out.append("Subject To")
    sym = {LE: "<=", EQ: "=", GE: ">="}
    A = model.A
    for r in range(model.n_rows):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        order = np.argsort(A.indices[lo:hi], kind="stable")
        idx = A.indices[lo:hi][order]
        val = A.data[lo:hi][order]
        lines = _expr(names, idx, val)
        lines[-1] += f" {sym[model.senses[r]]} {_num(model.rhs[r])}"
        out.append(f" {model.row_names[r]}: " + lines[0])
        out.extend("   " + ln for ln in lines[1:])

    out.append("Bounds")
    for j, name in enumerate(names):
        if model.is_binary[j]:
            continue
        lb, ub = model.lb[j], model.ub[j]
        if np.isinf(lb) and np.isinf(ub):
            out.append(f" {name} free")
        elif np.isinf(ub):
            out.append(f" {name} >= {_num(lb)}")
        elif np.isinf(lb):
            out.append(f" -inf <= {name} <= {_num(ub)}")
        elif lb == ub:
            out.append(f" {name} = {_num(lb)}")
        else:
            out.append(f" {_num(lb)} <= {name} <= {_num(ub)}")
    if model.offset:
        out.append(" __const = 1")

    bins = [names[j] for j in np.flatnonzero(model.is_binary)]
    if bins:
        out.append("Binaries")
        out.extend(" " + " ".join(bins[i : i + 8]) for i in range(0, len(bins), 8))
    out.append("End")
    return "\n".join(out) + "\n"


def count_binaries(lp_text: str) -> int:
    """Number of names declared in the Binaries section of an LP text."""
    count = 0
    inside = False
    for line in lp_text.splitlines():
        head = line.strip().lower()
        if head in ("binaries", "binary", "bin"):
            inside = True
            continue
        if inside:
            if head in ("end", "generals", "general", "bounds", "subject to"):
                break
            count += len(line.split())
    return count
