"""Solver-independent mixed-integer linear program."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

CONTINUOUS = "continuous"
BINARY = "binary"

LE, EQ, GE = "<=", "=", ">="
_SENSES = {"<=": LE, "<": LE, "=": EQ, "==": EQ, ">=": GE, ">": GE}


class MilpError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = CONTINUOUS
    lb: float = 0.0
    ub: float = np.inf


class MilpModel:
    """Minimize ``c @ x + offset`` subject to sparse linear rows and bounds.

    Instances are treated as immutable; the underlying arrays are marked
    read-only.
    """

    def __init__(self, names, kinds, lb, ub, A, senses, rhs, row_names, c, offset=0.0, name="model"):
        self.name = name
        self.var_names: tuple[str, ...] = tuple(names)
        self.is_binary = np.asarray([k == BINARY for k in kinds], dtype=bool)
        self.lb = np.asarray(lb, dtype=float)
        self.ub = np.asarray(ub, dtype=float)
        self.A: sp.csr_matrix = sp.csr_matrix(A)
        self.senses: tuple[str, ...] = tuple(senses)
        self.rhs = np.asarray(rhs, dtype=float)
        self.row_names: tuple[str, ...] = tuple(row_names)
        self.c = np.asarray(c, dtype=float)
        self.offset = float(offset)
        self._index = {n: i for i, n in enumerate(self.var_names)}
        for arr in (self.is_binary, self.lb, self.ub, self.rhs, self.c, self.A.data):
            arr.setflags(write=False)

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_binaries(self) -> int:
        return int(self.is_binary.sum())

    def index(self, name: str) -> int:
        return self._index[name]

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Rows as ``lo <= A x <= hi``."""
        senses = np.asarray(self.senses)
        lo = np.where(senses == LE, -np.inf, self.rhs)
        hi = np.where(senses == GE, np.inf, self.rhs)
        return lo, hi

    def objective_value(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float) + self.offset)

    @classmethod
    def build(
        cls,
        variables: Iterable[Variable],
        constraints: Iterable[tuple[Mapping[str, float], str, float]],
        objective: Mapping[str, float],
        offset: float = 0.0,
        name: str = "model",
    ) -> "MilpModel":
        """Build from named variables, ``(coefficients, sense, rhs)`` rows and an objective."""
        b = ModelBuilder(name)
        for v in variables:
            b.add_var(v.name, v.kind, v.lb, v.ub)
        lookup = b.lookup
        for k, (coefs, sense, rhs) in enumerate(constraints):
            try:
                row = {lookup(n): a for n, a in coefs.items()}
            except KeyError as exc:
                raise MilpError(f"constraint {k} references undeclared variable {exc.args[0]!r}") from None
            b.add_row(row, sense, rhs)
        for n, a in objective.items():
            try:
                b.add_obj(lookup(n), a)
            except KeyError:
                raise MilpError(f"objective references undeclared variable {n!r}") from None
        b.offset += offset
        return b.build()


class ModelBuilder:
    """Incremental builder producing an immutable :class:`MilpModel`."""

    def __init__(self, name: str = "model"):
        self.name = name
        self._names: list[str] = []
        self._kinds: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._rows_idx: list[np.ndarray] = []
        self._rows_val: list[np.ndarray] = []
        self._senses: list[str] = []
        self._rhs: list[float] = []
        self._row_names: list[str] = []
        self._obj: dict[int, float] = {}
        self._index: dict[str, int] = {}
        self._dupes: list[str] = []
        self.offset = 0.0

    @property
    def n_vars(self) -> int:
        return len(self._names)

    def lookup(self, name: str) -> int:
        return self._index[name]

    def add_var(self, name: str, kind: str = CONTINUOUS, lb: float = 0.0, ub: float = np.inf) -> int:
        if kind not in (CONTINUOUS, BINARY):
            raise MilpError(f"unknown variable kind {kind!r}")
        if kind == BINARY:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if lb > ub:
            raise MilpError(f"variable {name!r}: lb {lb} > ub {ub}")
        if name in self._index:
            self._dupes.append(name)
        idx = len(self._names)
        self._index.setdefault(name, idx)
        self._names.append(name)
        self._kinds.append(kind)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        return idx

    def add_row(self, coefs: Mapping[int, float], sense: str, rhs: float, name: str | None = None) -> int:
        try:
            sense = _SENSES[sense]
        except KeyError:
            raise MilpError(f"unknown constraint sense {sense!r}") from None
        idx = np.fromiter(coefs.keys(), dtype=np.int64, count=len(coefs))
        val = np.fromiter(coefs.values(), dtype=np.float64, count=len(coefs))
        keep = val != 0.0
        self._rows_idx.append(idx[keep])
        self._rows_val.append(val[keep])
        self._senses.append(sense)
        self._rhs.append(float(rhs))
        self._row_names.append(name or f"r{len(self._rhs) - 1}")
        return len(self._rhs) - 1

    def add_obj(self, idx: int, coef: float) -> None:
        self._obj[idx] = self._obj.get(idx, 0.0) + float(coef)

    def build(self) -> MilpModel:
        if self._dupes:
            raise MilpError(f"duplicate variable name(s): {sorted(set(self._dupes))[:5]}")
        n = len(self._names)
        m = len(self._rhs)
        lens = np.fromiter((r.size for r in self._rows_idx), dtype=np.int64, count=m)
        indptr = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
        indices = np.concatenate(self._rows_idx) if m else np.zeros(0, dtype=np.int64)
        data = np.concatenate(self._rows_val) if m else np.zeros(0)
        if indices.size and (indices.min() < 0 or indices.max() >= n):
            bad = int(indices[(indices < 0) | (indices >= n)][0])
            raise MilpError(f"constraint references undeclared variable index {bad}")
        if any(i < 0 or i >= n for i in self._obj):
            raise MilpError("objective references an undeclared variable")
        A = sp.csr_matrix((data, indices, indptr), shape=(m, n))
        A.sum_duplicates()
        c = np.zeros(n)
        for i, a in self._obj.items():
            c[i] = a
        return MilpModel(
            self._names, self._kinds, self._lb, self._ub, A, self._senses, self._rhs,
            self._row_names, c, self.offset, self.name,
        )
