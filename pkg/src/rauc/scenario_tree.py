"""Scenario trees: the filtration of the net-load process as explicit nodes.

Nodes are stored in breadth-first order (parents before children, periods
nondecreasing) as flat numpy arrays, with children in CSR form. A node at period
``t`` is an atom of the period-``t`` information set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .instance import Instance, InstanceError, ScenarioSpec

PATH_PROB_TOL = 1e-12


@dataclass(frozen=True)
class TreeNode:
    node_id: int
    period_t: int
    parent: int | None
    children: tuple[int, ...]
    conditional_prob: float
    path_prob: float
    demand: float


class ScenarioTree:
    """Immutable node-indexed scenario tree."""

    def __init__(self, period, parent, cond_prob, demand, *, check: bool = True):
        self.period = np.ascontiguousarray(period, dtype=np.int64)
        self.parent = np.ascontiguousarray(parent, dtype=np.int64)
        self.cond_prob = np.ascontiguousarray(cond_prob, dtype=np.float64)
        self.demand = np.ascontiguousarray(demand, dtype=np.float64)
        n = self.period.size
        if not (self.parent.size == self.cond_prob.size == self.demand.size == n) or n == 0:
            raise ValueError("tree arrays must be nonempty and of equal length")

        path = np.empty(n)
        path[0] = 1.0
        if n > 1:
            if np.any(self.parent[1:] >= np.arange(1, n)) or np.any(self.parent[1:] < 0):
                raise ValueError("nodes must be in breadth-first order (parent index < node index)")
            # parents precede children, so one forward sweep per level suffices
            for t in range(int(self.period[0]) + 1, int(self.period.max()) + 1):
                sel = np.flatnonzero(self.period == t)
                path[sel] = path[self.parent[sel]] * self.cond_prob[sel]
        self.path_prob = path

        child_nodes = np.arange(1, n)
        order = np.argsort(self.parent[1:], kind="stable")
        self.child_idx = child_nodes[order]
        counts = np.bincount(self.parent[1:], minlength=n) if n > 1 else np.zeros(n, dtype=np.int64)
        self.child_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

        self.T = int(self.period.max())
        self.t0 = int(self.period[0])
        starts = np.searchsorted(self.period, np.arange(self.t0, self.T + 2))
        self.period_ptr = starts.astype(np.int64)
        if check:
            self._check()

    # -- construction helpers -------------------------------------------------

    def _check(self) -> None:
        if self.parent[0] != -1:
            raise ValueError("node 0 must be the root")
        if np.any(np.diff(self.period) < 0):
            raise ValueError("periods must be nondecreasing in node order")
        if self.period.size > 1 and np.any(self.period[1:] != self.period[self.parent[1:]] + 1):
            raise ValueError("every child must sit one period after its parent")
        n_children = np.diff(self.child_ptr)
        internal = n_children > 0
        if np.any(~internal & (self.period != self.T)):
            raise ValueError("all leaves must be at the final period")
        sums = np.bincount(self.parent[1:], weights=self.cond_prob[1:], minlength=self.n_nodes)
        if np.any(np.abs(sums[internal] - 1.0) > 1e-9):
            raise ValueError("conditional probabilities of siblings must sum to 1")
        if np.any(self.cond_prob < 0):
            raise ValueError("negative conditional probability")

    # -- basic accessors --------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return int(self.period.size)

    @property
    def leaves(self) -> np.ndarray:
        return self.stage(self.T)

    @property
    def root(self) -> int:
        return 0

    def stage(self, t: int) -> np.ndarray:
        """Node ids at period ``t``."""
        k = t - self.t0
        return np.arange(self.period_ptr[k], self.period_ptr[k + 1])

    @property
    def stages(self) -> dict[int, np.ndarray]:
        return {t: self.stage(t) for t in range(self.t0, self.T + 1)}

    def children(self, n: int) -> np.ndarray:
        return self.child_idx[self.child_ptr[n] : self.child_ptr[n + 1]]

    def is_leaf(self, n: int) -> bool:
        return self.child_ptr[n + 1] == self.child_ptr[n]

    def node(self, n: int) -> TreeNode:
        par = int(self.parent[n])
        return TreeNode(
            node_id=n,
            period_t=int(self.period[n]),
            parent=None if par < 0 else par,
            children=tuple(int(c) for c in self.children(n)),
            conditional_prob=float(self.cond_prob[n]),
            path_prob=float(self.path_prob[n]),
            demand=float(self.demand[n]),
        )

    def __iter__(self) -> Iterator[TreeNode]:
        return (self.node(n) for n in range(self.n_nodes))

    def __len__(self) -> int:
        return self.n_nodes

    def ancestors(self, n: int) -> list[int]:
        """Root-to-``n`` path, inclusive."""
        path = []
        while n >= 0:
            path.append(int(n))
            n = int(self.parent[n])
        return path[::-1]

    def subtree(self, n: int) -> list[int]:
        """Nodes of the subtree rooted at ``n`` in breadth-first order."""
        out = [n]
        frontier = [n]
        while frontier:
            nxt = []
            for m in frontier:
                nxt.extend(int(c) for c in self.children(m))
            out.extend(nxt)
            frontier = nxt
        return sorted(out)

    def descendants_within(self, n: int, depth: int) -> list[int]:
        """Descendants of ``n`` at most ``depth`` periods later (``n`` excluded)."""
        out: list[int] = []
        frontier = [n]
        for _ in range(depth):
            nxt = []
            for m in frontier:
                nxt.extend(int(c) for c in self.children(m))
            out.extend(nxt)
            frontier = nxt
            if not frontier:
                break
        return out

    def equals(self, other: "ScenarioTree") -> bool:
        return (
            np.array_equal(self.period, other.period)
            and np.array_equal(self.parent, other.parent)
            and np.allclose(self.cond_prob, other.cond_prob, rtol=0, atol=1e-15)
            and np.allclose(self.demand, other.demand, rtol=0, atol=1e-12)
        )

    # -- derived trees ----------------------------------------------------------

    def restrict_to(self, n: int) -> tuple["ScenarioTree", np.ndarray]:
        """Conditional tree given that node ``n`` has been reached.

        Returns the tree formed by the root-to-``n`` chain followed by the subtree
        of ``n`` (chain probabilities set to 1), and an array mapping its node ids
        back to ids in ``self``.
        """
        keep = self.ancestors(n)[:-1] + self.subtree(n)
        old = np.asarray(keep, dtype=np.int64)
        remap = -np.ones(self.n_nodes, dtype=np.int64)
        remap[old] = np.arange(old.size)
        parent = np.where(self.parent[old] >= 0, remap[np.maximum(self.parent[old], 0)], -1)
        parent[0] = -1
        cond = self.cond_prob[old].copy()
        chain = self.period[old] <= self.period[n]
        cond[chain] = 1.0
        return ScenarioTree(self.period[old], parent, cond, self.demand[old]), old

    def dump(self) -> str:
        """Tab-separated debug listing: node_id period parent cond_prob path_prob demand."""
        lines = []
        for n in range(self.n_nodes):
            lines.append(
                f"{n}\t{self.period[n]}\t{self.parent[n]}\t{self.cond_prob[n]:.12g}"
                f"\t{self.path_prob[n]:.12g}\t{self.demand[n]:.12g}"
            )
        return "\n".join(lines) + "\n"


def merge_identical_siblings(tree: ScenarioTree) -> tuple[ScenarioTree, np.ndarray]:
    """Lump sibling nodes whose subtrees carry identical demand data.

    Lumped siblings keep one representative with their summed probability.
    Under a monotone nested risk measure both commitment models reach the
    same optimum on the lumped tree, since copying the cheapest sibling's
    decisions into the others never raises the risk. Returns the lumped tree
    and, for every original node, the id of its representative.
    """
    n = tree.n_nodes
    sig = np.empty(n, dtype=np.int64)
    table: dict = {}
    for k in range(n - 1, -1, -1):
        groups: dict[int, float] = {}
        for c in tree.children(k):
            groups[int(sig[c])] = groups.get(int(sig[c]), 0.0) + float(tree.cond_prob[c])
        key = (float(tree.demand[k]), tuple(sorted((g, round(p, 12)) for g, p in groups.items())))
        sig[k] = table.setdefault(key, len(table))

    rep = np.empty(n, dtype=np.int64)
    rep[0] = 0
    period, parent, cond, demand = [int(tree.period[0])], [-1], [1.0], [float(tree.demand[0])]
    made: dict[tuple[int, int], int] = {}
    for k in range(1, n):
        p = int(rep[tree.parent[k]])
        key = (p, int(sig[k]))
        if key not in made:
            made[key] = len(period)
            period.append(int(tree.period[k]))
            parent.append(p)
            cond.append(0.0)
            demand.append(float(tree.demand[k]))
        rep[k] = made[key]
    # lumped probability: sum over the original siblings of one representative parent
    first_parent = {}
    for k in range(1, n):
        first_parent.setdefault(int(rep[tree.parent[k]]), int(tree.parent[k]))
    for k in range(1, n):
        if int(tree.parent[k]) == first_parent[int(rep[tree.parent[k]])]:
            cond[rep[k]] += float(tree.cond_prob[k])
    return ScenarioTree(period, parent, cond, demand), rep


def chain_tree(demands: Sequence[float]) -> ScenarioTree:
    """Deterministic single-path tree."""
    T = len(demands)
    return ScenarioTree(np.arange(1, T + 1), np.arange(-1, T - 1), np.ones(T), demands)


def build_tree_from_spec(
    base_demand: Sequence[float], spec: ScenarioSpec, epsilon: float | None = None
) -> ScenarioTree:
    eps = spec.epsilon if epsilon is None else float(epsilon)
    if eps < 0:
        raise InstanceError(f"epsilon must be nonnegative, got {eps}")
    mult = spec.multipliers(eps)
    if any(m <= 0 for m in mult):
        raise InstanceError(f"epsilon={eps} yields a nonpositive demand multiplier")
    T = len(base_demand)
    branch = set(spec.branch_periods)
    if any(not 2 <= p <= T for p in branch):
        raise InstanceError(f"branch periods must lie in 2..{T}")
    probs = np.asarray(spec.branch_probs, dtype=float)
    if branch and abs(probs.sum() - 1.0) > 1e-9:
        raise InstanceError("branch probabilities must sum to 1")

    period = [1]
    parent = [-1]
    cond = [1.0]
    scale = [1.0]
    demand = [float(base_demand[0])]
    prev = [0]
    for t in range(2, T + 1):
        cur = []
        for p in prev:
            if t in branch:
                for k, m in enumerate(mult):
                    cur.append(len(period))
                    period.append(t)
                    parent.append(p)
                    cond.append(float(probs[k]))
                    scale.append(m)
                    demand.append(m * base_demand[t - 1])
            else:
                cur.append(len(period))
                period.append(t)
                parent.append(p)
                cond.append(1.0)
                scale.append(scale[p])
                demand.append(scale[p] * base_demand[t - 1])
        prev = cur
    return ScenarioTree(period, parent, cond, demand)


def build_tree(inst: Instance, epsilon: float | None = None) -> ScenarioTree:
    """Materialize the instance's scenario tree at variability ``epsilon``.

    Demand is deterministic until the first branch period; from each branch
    period up to the next one, a child scales the base demand by its multiplier.
    """
    eps = inst.scenario_spec.epsilon if epsilon is None else epsilon
    if eps >= 1:
        raise InstanceError(f"epsilon={eps} >= 1 allows nonpositive demand")
    return build_tree_from_spec(inst.demand.base_demand, inst.scenario_spec, eps)


def enumerate_paths(tree: ScenarioTree) -> list[tuple[int, tuple[int, ...], float]]:
    """One ``(leaf_id, root-to-leaf node ids, path probability)`` per leaf."""
    return [(int(leaf), tuple(tree.ancestors(int(leaf))), float(tree.path_prob[leaf])) for leaf in tree.leaves]


def path_matrix(tree: ScenarioTree) -> np.ndarray:
    """``(n_leaves, T)`` array of node ids along each root-to-leaf path."""
    leaves = tree.leaves
    depth = tree.T - tree.t0 + 1
    out = np.empty((leaves.size, depth), dtype=np.int64)
    cur = leaves.copy()
    for k in range(depth - 1, -1, -1):
        out[:, k] = cur
        cur = tree.parent[cur]
    return out


def total_demand_random_variable(tree: ScenarioTree) -> np.ndarray:
    """Total demand accumulated along each root-to-leaf path, in leaf order."""
    return tree.demand[path_matrix(tree)].sum(axis=1)


def node_count(base_len: int, branch_periods: Sequence[int], n_branches: int = 2) -> int:
    """Closed-form node count: sum over blocks of block length times branch count."""
    bounds = [1] + sorted(branch_periods) + [base_len + 1]
    return sum((hi - lo) * n_branches**k for k, (lo, hi) in enumerate(zip(bounds, bounds[1:])))
