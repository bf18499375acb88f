"""Problem data: generator fleet, base demand profile and scenario specification.

Instances are loaded from a JSON document (see ``data/kazarlis10.json``) and are
immutable afterwards.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

PROB_TOL = 1e-9

_GEN_KEYS = ("a", "b", "c", "q_min", "q_max", "V_prime", "V", "B_prime", "B", "M", "L", "SU", "SD")


class InstanceError(ValueError):
    """Raised when an instance document cannot be parsed or violates the schema."""


@dataclass(frozen=True)
class Generator:
    id: int
    fixed_cost_a: float
    prod_cost_b: float
    prod_cost_c: float
    q_min: float
    q_max: float
    startup_rate_Vp: float
    rampup_rate_V: float
    shutdown_rate_Bp: float
    rampdown_rate_B: float
    min_up_M: int
    min_down_L: int
    startup_cost_SU: float
    shutdown_cost_SD: float

    def production_cost(self, v: float) -> float:
        """Quadratic production cost ``b v + c v^2`` (fixed cost excluded)."""
        return self.prod_cost_b * v + self.prod_cost_c * v * v

    def to_dict(self) -> dict[str, float | int]:
        return {
            "a": self.fixed_cost_a,
            "b": self.prod_cost_b,
            "c": self.prod_cost_c,
            "q_min": self.q_min,
            "q_max": self.q_max,
            "V_prime": self.startup_rate_Vp,
            "V": self.rampup_rate_V,
            "B_prime": self.shutdown_rate_Bp,
            "B": self.rampdown_rate_B,
            "M": self.min_up_M,
            "L": self.min_down_L,
            "SU": self.startup_cost_SU,
            "SD": self.shutdown_cost_SD,
        }


@dataclass(frozen=True)
class DemandProfile:
    base_demand: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.base_demand)


@dataclass(frozen=True)
class ScenarioSpec:
    """Symbolic scenario structure.

    At every branch period each node splits into ``len(branch_probs)`` children;
    child ``k`` scales the base demand by ``1 + branch_signs[k] * epsilon`` until
    the next branch period.
    """

    branch_periods: tuple[int, ...] = ()
    epsilon: float = 0.0
    branch_probs: tuple[float, ...] = (0.5, 0.5)
    branch_signs: tuple[float, ...] = (-1.0, 1.0)

    def multipliers(self, epsilon: float | None = None) -> tuple[float, ...]:
        eps = self.epsilon if epsilon is None else epsilon
        return tuple(1.0 + s * eps for s in self.branch_signs)

    def with_epsilon(self, epsilon: float) -> "ScenarioSpec":
        return dataclasses.replace(self, epsilon=float(epsilon))


@dataclass(frozen=True)
class InitialState:
    """Generator status entering period 1.

    ``elapsed`` counts the periods the generator has been in its current state
    (on or off) up to and including period 0.
    """

    on: tuple[bool, ...]
    output: tuple[float, ...]
    elapsed: tuple[int, ...]

    @classmethod
    def all_off(cls, generators: Sequence[Generator]) -> "InitialState":
        long_ago = max([g.min_down_L for g in generators], default=0) + 1
        n = len(generators)
        return cls(on=(False,) * n, output=(0.0,) * n, elapsed=(long_ago,) * n)

    def forced_on_periods(self, gen: Generator, idx: int) -> int:
        """Number of leading periods the generator must stay on (min-up carry-over)."""
        if not self.on[idx]:
            return 0
        # started at period 1 - elapsed, must be on through 1 - elapsed + M
        return max(0, gen.min_up_M - self.elapsed[idx] + 1)

    def forced_off_periods(self, gen: Generator, idx: int) -> int:
        if self.on[idx]:
            return 0
        return max(0, gen.min_down_L - self.elapsed[idx] + 1)


@dataclass(frozen=True)
class Instance:
    generators: tuple[Generator, ...]
    demand: DemandProfile
    scenario_spec: ScenarioSpec
    horizon_T: int
    initial_state: InitialState
    name: str = "instance"

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    def with_epsilon(self, epsilon: float) -> "Instance":
        return dataclasses.replace(self, scenario_spec=self.scenario_spec.with_epsilon(epsilon))

    def with_demand(self, base_demand: Sequence[float]) -> "Instance":
        return dataclasses.replace(
            self, demand=DemandProfile(tuple(float(d) for d in base_demand)), horizon_T=len(base_demand)
        )

    def to_dict(self) -> dict[str, Any]:
        spec = self.scenario_spec
        doc: dict[str, Any] = {
            "name": self.name,
            "horizon": self.horizon_T,
            "generators": [g.to_dict() for g in self.generators],
            "base_demand": list(self.demand.base_demand),
            "scenario": {
                "branch_periods": list(spec.branch_periods),
                "epsilon": spec.epsilon,
                "branch_probs": list(spec.branch_probs),
                "branch_signs": list(spec.branch_signs),
            },
            "initial_state": {
                "on": list(self.initial_state.on),
                "output": list(self.initial_state.output),
                "elapsed": list(self.initial_state.elapsed),
            },
        }
        return doc

    def fingerprint(self) -> str:
        """Stable hash of the instance content, used as a cache key."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def entries(self) -> list[str]:
        return self.errors + self.warnings

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __str__(self) -> str:
        lines = [f"{len(self)} violations"]
        lines += [f"  error: {e}" for e in self.errors]
        lines += [f"  warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def _number(doc: dict, key: str, where: str) -> float:
    if key not in doc:
        raise InstanceError(f"{where}: missing field {key!r}")
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise InstanceError(f"{where}: field {key!r} must be a number, got {val!r}")
    return float(val)


def _parse_generator(idx: int, doc: Any) -> Generator:
    where = f"generators[{idx}]"
    if not isinstance(doc, dict):
        raise InstanceError(f"{where}: expected an object")
    vals = {k: _number(doc, k, where) for k in _GEN_KEYS}
    for k, v in vals.items():
        if v < 0:
            raise InstanceError(f"{where}: field {k!r} must be nonnegative, got {v}")
    for k in ("M", "L"):
        if vals[k] != int(vals[k]):
            raise InstanceError(f"{where}: field {k!r} must be an integer number of periods")
    gen = Generator(
        id=int(doc.get("id", idx + 1)),
        fixed_cost_a=vals["a"],
        prod_cost_b=vals["b"],
        prod_cost_c=vals["c"],
        q_min=vals["q_min"],
        q_max=vals["q_max"],
        startup_rate_Vp=vals["V_prime"],
        rampup_rate_V=vals["V"],
        shutdown_rate_Bp=vals["B_prime"],
        rampdown_rate_B=vals["B"],
        min_up_M=int(vals["M"]),
        min_down_L=int(vals["L"]),
        startup_cost_SU=vals["SU"],
        shutdown_cost_SD=vals["SD"],
    )
    if gen.q_min > gen.q_max:
        raise InstanceError(f"{where}: q_min={gen.q_min} exceeds q_max={gen.q_max}")
    return gen


def _parse_scenario(doc: Any, horizon: int) -> ScenarioSpec:
    if doc is None:
        return ScenarioSpec()
    if not isinstance(doc, dict):
        raise InstanceError("scenario: expected an object")
    periods = doc.get("branch_periods", [])
    if not isinstance(periods, list) or not all(isinstance(p, int) for p in periods):
        raise InstanceError("scenario.branch_periods: expected a list of integers")
    probs = tuple(float(p) for p in doc.get("branch_probs", [0.5, 0.5]))
    if "branch_signs" in doc:
        signs = tuple(float(s) for s in doc["branch_signs"])
    elif len(probs) == 2:
        signs = (-1.0, 1.0)
    else:
        raise InstanceError("scenario: branch_signs is required unless there are exactly two branches")
    if len(signs) != len(probs):
        raise InstanceError("scenario: branch_signs and branch_probs must have equal length")
    eps = float(doc.get("epsilon", 0.0))
    return ScenarioSpec(tuple(periods), eps, probs, signs)


def _parse_initial_state(doc: Any, generators: Sequence[Generator]) -> InitialState:
    if doc is None:
        return InitialState.all_off(generators)
    n = len(generators)
    try:
        on = tuple(bool(x) for x in doc["on"])
        output = tuple(float(x) for x in doc.get("output", [0.0] * n))
        default_elapsed = [max([g.min_down_L for g in generators], default=0) + 1] * n
        elapsed = tuple(int(x) for x in doc.get("elapsed", default_elapsed))
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"initial_state: {exc}") from exc
    if not (len(on) == len(output) == len(elapsed) == n):
        raise InstanceError("initial_state: arrays must have one entry per generator")
    return InitialState(on, output, elapsed)


def instance_from_dict(doc: Any) -> Instance:
    if not isinstance(doc, dict):
        raise InstanceError("instance document must be a JSON object")
    for key in ("horizon", "generators", "base_demand"):
        if key not in doc:
            raise InstanceError(f"missing top-level field {key!r}")
    horizon = doc["horizon"]
    if not isinstance(horizon, int) or horizon < 1:
        raise InstanceError(f"horizon must be a positive integer, got {horizon!r}")
    if not isinstance(doc["generators"], list):
        raise InstanceError("generators: expected an array")
    gens = tuple(_parse_generator(i, g) for i, g in enumerate(doc["generators"]))
    base = doc["base_demand"]
    if not isinstance(base, list) or len(base) != horizon:
        raise InstanceError(f"base_demand must be an array of length horizon={horizon}")
    demand = []
    for t, d in enumerate(base):
        if isinstance(d, bool) or not isinstance(d, (int, float)) or d < 0:
            raise InstanceError(f"base_demand[{t}] must be a nonnegative number, got {d!r}")
        demand.append(float(d))
    return Instance(
        generators=gens,
        demand=DemandProfile(tuple(demand)),
        scenario_spec=_parse_scenario(doc.get("scenario"), horizon),
        horizon_T=horizon,
        initial_state=_parse_initial_state(doc.get("initial_state"), gens),
        name=str(doc.get("name", "instance")),
    )


def loads(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"parse error: {exc}") from exc
    return instance_from_dict(doc)


def load_instance(source: str | Path) -> Instance:
    """Load an instance from a JSON file path."""
    return loads(Path(source).read_text())


def dumps(inst: Instance) -> str:
    return json.dumps(inst.to_dict(), indent=2)


def bundled_path(name: str = "kazarlis10.json") -> Path:
    return Path(str(resources.files("rauc") / "data" / name))


def load_bundled(name: str = "kazarlis10.json") -> Instance:
    return load_instance(bundled_path(name))


def validate_instance(inst: Instance) -> ValidationReport:
    """Collect every invariant violation; never raises."""
    rep = ValidationReport()
    if inst.horizon_T < 1:
        rep.errors.append(f"horizon {inst.horizon_T} < 1")
    if len(inst.demand) != inst.horizon_T:
        rep.errors.append(f"base_demand has length {len(inst.demand)}, expected {inst.horizon_T}")
    for t, d in enumerate(inst.demand.base_demand, start=1):
        if d < 0:
            rep.errors.append(f"base demand at period {t} is negative ({d})")
    ids = [g.id for g in inst.generators]
    if len(set(ids)) != len(ids):
        rep.errors.append("generator ids are not unique")
    for g in inst.generators:
        tag = f"generator {g.id}"
        if not 0 <= g.q_min <= g.q_max:
            rep.errors.append(f"{tag}: need 0 <= q_min <= q_max (got {g.q_min}, {g.q_max})")
        costs = (g.fixed_cost_a, g.prod_cost_b, g.prod_cost_c, g.startup_cost_SU, g.shutdown_cost_SD)
        if any(c < 0 for c in costs):
            rep.errors.append(f"{tag}: negative cost coefficient")
        if g.min_up_M < 0 or g.min_down_L < 0:
            rep.errors.append(f"{tag}: negative minimum up/down time")
        if g.startup_rate_Vp < g.q_min:
            rep.errors.append(f"{tag}: start-up rate V'={g.startup_rate_Vp} below q_min={g.q_min}")
        if g.shutdown_rate_Bp < g.q_min:
            rep.errors.append(f"{tag}: shut-down rate B'={g.shutdown_rate_Bp} below q_min={g.q_min}")
    init = inst.initial_state
    if len(init.on) != inst.n_generators:
        rep.errors.append("initial_state does not cover every generator")
    else:
        for idx, g in enumerate(inst.generators):
            out = init.output[idx]
            if init.on[idx] and not g.q_min <= out <= g.q_max:
                rep.errors.append(f"generator {g.id}: initial output {out} outside [q_min, q_max]")
            if not init.on[idx] and out != 0:
                rep.errors.append(f"generator {g.id}: initial output {out} while off")

    spec = inst.scenario_spec
    periods = spec.branch_periods
    if any(b <= a for a, b in zip(periods, periods[1:])):
        rep.errors.append("scenario branch periods are not strictly increasing")
    if any(not 2 <= p <= inst.horizon_T for p in periods):
        rep.errors.append(f"scenario branch periods must lie in 2..{inst.horizon_T}")
    if periods:
        if abs(sum(spec.branch_probs) - 1.0) > PROB_TOL:
            rep.errors.append(f"branch probabilities sum to {sum(spec.branch_probs)}, not 1")
        if any(p < 0 for p in spec.branch_probs):
            rep.errors.append("negative branch probability")
        if any(m <= 0 for m in spec.multipliers()):
            rep.errors.append(f"nonpositive demand multiplier at epsilon={spec.epsilon}")

    cap = sum(g.q_max for g in inst.generators)
    first = periods[0] if periods else inst.horizon_T + 1
    top = max(spec.multipliers() + (1.0,))
    peak = max(
        (d * (top if t >= first else 1.0) for t, d in enumerate(inst.demand.base_demand, start=1)),
        default=0.0,
    )
    if peak > cap:
        rep.warnings.append(
            f"capacity shortfall: peak scenario demand {peak:g} MW exceeds fleet capacity {cap:g} MW"
        )
    return rep
