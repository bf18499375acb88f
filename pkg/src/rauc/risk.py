"""Conditional and composite mean-upper-semideviation risk measures on trees."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .scenario_tree import ScenarioTree

PROB_TOL = 1e-9

EXPECTATION = "expectation"
MUSD = "mean_upper_semideviation"


class RiskError(ValueError):
    pass


@dataclass(frozen=True)
class RiskSpec:
    kind: str = MUSD
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in (EXPECTATION, MUSD):
            raise RiskError(f"unknown risk kind {self.kind!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise RiskError(f"lambda must lie in [0, 1], got {self.lam}")

    @property
    def effective_lambda(self) -> float:
        return 0.0 if self.kind == EXPECTATION else self.lam

    @classmethod
    def musd(cls, lam: float) -> "RiskSpec":
        return cls(MUSD, float(lam))

    @classmethod
    def expectation(cls) -> "RiskSpec":
        return cls(EXPECTATION, 0.0)


def conditional_musd(values: Sequence[float], probs: Sequence[float], lam: float) -> float:
    """Mean plus ``lam`` times the upper semideviation of a discrete distribution."""
    v = np.asarray(values, dtype=float)
    p = np.asarray(probs, dtype=float)
    if v.size == 0:
        raise RiskError("empty child list")
    if v.shape != p.shape:
        raise RiskError("values and probabilities differ in length")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise RiskError(f"probabilities sum to {p.sum()!r}, not 1")
    if not 0.0 <= lam <= 1.0:
        raise RiskError(f"lambda must lie in [0, 1], got {lam}")
    m = float(p @ v)
    return m + lam * float(p @ np.maximum(v - m, 0.0))


def composite_risk(tree: ScenarioTree, costs, spec: RiskSpec) -> float:
    """Nested risk ``Z_1 + rho_1(Z_2 + ... rho_{T-1}(Z_T))`` of a node cost process."""
    return float(node_values(tree, costs, spec)[0])


def node_values(tree: ScenarioTree, costs, spec: RiskSpec) -> np.ndarray:
    """Cost-to-go under the nested measure at every node."""
    c = np.ascontiguousarray(costs, dtype=np.float64)
    if c.shape != (tree.n_nodes,):
        raise RiskError(f"cost process has shape {c.shape}, tree has {tree.n_nodes} nodes")
    return kernels.nested_musd(tree.period_ptr, tree.parent, tree.cond_prob, c, float(spec.effective_lambda))


def expected_path_cost(tree: ScenarioTree, costs) -> float:
    """Probability-weighted node cost sum (the risk-neutral value)."""
    c = np.asarray(costs, dtype=float)
    return float(tree.path_prob @ c)


# ---------------------------------------------------------------------------
# axiom sampling
# ---------------------------------------------------------------------------


@dataclass
class PropertyReport:
    trials: int
    tol: float
    violations: list[str] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=lambda: {"A1": 0, "A2": 0, "A3": 0, "A4": 0})

    @property
    def ok(self) -> bool:
        return not self.violations


def check_coherence(spec: RiskSpec, trials: int, rng_seed: int | None = None, tol: float = 1e-9) -> PropertyReport:
    """Sample discrete random variables and test convexity, monotonicity,
    translational equivariance and positive homogeneity."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng_seed)
    lam = spec.effective_lambda
    rep = PropertyReport(trials, tol)

    def rho(v, p):
        return conditional_musd(v, p, lam)

    def fail(axiom, msg):
        rep.counts[axiom] += 1
        rep.violations.append(f"{axiom}: {msg}")

    for k in range(trials):
        n = int(rng.integers(1, 9))
        p = rng.dirichlet(np.ones(n))
        p /= p.sum()
        scale = 10.0 ** rng.uniform(-2, 3)
        z = rng.normal(0, scale, n)
        w = rng.normal(0, scale, n)
        a = rng.uniform()
        c = rng.normal(0, scale)
        cpos = rng.uniform(0.01, 100.0)
        atol = tol * max(1.0, np.abs(z).max(), np.abs(w).max(), abs(c), cpos * np.abs(z).max())

        lhs = rho(a * z + (1 - a) * w, p)
        rhs = a * rho(z, p) + (1 - a) * rho(w, p)
        if lhs > rhs + atol:
            fail("A1", f"trial {k}: rho(aZ+(1-a)W)={lhs} > {rhs}")
        hi = np.maximum(z, w)
        if rho(hi, p) < rho(w, p) - atol:
            fail("A2", f"trial {k}: rho(max(Z,W)) < rho(W)")
        if abs(rho(z + c, p) - rho(z, p) - c) > atol:
            fail("A3", f"trial {k}: rho(Z+c) != rho(Z)+c for c={c}")
        if abs(rho(cpos * z, p) - cpos * rho(z, p)) > atol:
            fail("A4", f"trial {k}: rho(cZ) != c rho(Z) for c={cpos}")
    return rep


# ---------------------------------------------------------------------------
# epigraph linearization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpigraphStencil:
    """Linear rows tying node ``n``'s risk value to its children's.

    With ``theta`` the cost-to-go variables and auxiliaries ``m`` (mean) and
    ``s_c >= 0`` (upside of child ``c``)::

        m = sum_c p_c theta_c
        s_c >= theta_c - m
        theta_n = cost_n + m + lam * sum_c p_c s_c
    """

    node: int
    children: tuple[int, ...]
    probs: tuple[float, ...]
    lam: float

    @property
    def deviation_weights(self) -> tuple[float, ...]:
        return tuple(self.lam * p for p in self.probs)


def epigraph_coefficients(tree: ScenarioTree, node: int, spec: RiskSpec) -> EpigraphStencil:
    kids = tree.children(node)
    if kids.size == 0:
        raise RiskError(f"node {node} is a leaf; its value is its own cost")
    return EpigraphStencil(
        node=int(node),
        children=tuple(int(c) for c in kids),
        probs=tuple(float(tree.cond_prob[c]) for c in kids),
        lam=float(spec.effective_lambda),
    )
