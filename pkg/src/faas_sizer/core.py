"""Domain types shared by every other module.

The types here are immutable value objects: a system under configuration
(functions plus a composition DAG), knobs, goals, policies, and samples.
They all serialize to a strict JSON schema (field names match the dataclass
fields, unknown fields are rejected) because JSON files are the lingua
franca between the CLI, the HTTP service, and the library.
"""

from __future__ import annotations

import itertools
import json
import math
import operator
from dataclasses import dataclass, field
from enum import Enum
from hashlib import sha256
from typing import Iterator

PROB_TOL = 1e-9
ENUMERATION_CAP = 10**6

MEMORY_DOMAIN_DEFAULT = tuple(range(128, 10241))  # 10113 values, MB


# ---------------------------------------------------------------------------
# errors

class SizerError(Exception):
    """Base class for all library errors."""


class SchemaError(SizerError):
    """A JSON document does not match the documented schema."""


class ValidationError(SizerError):
    """A domain object violates its invariants."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class CapExceededError(SizerError):
    """An enumeration would exceed the configured cap."""


class InfeasibleError(SizerError):
    """No candidate satisfies the goal bounds."""


class PlatformError(SizerError):
    """The FaaS platform rejected an operation (unknown id, limit, time travel)."""


# ---------------------------------------------------------------------------
# JSON helpers

def canonical_json(obj) -> str:
    """Serialize with sorted keys and a trailing newline.

    Canonical form makes serialize -> parse -> serialize a fixed point and
    keeps every artifact byte-identical across runs.
    """
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def check_fields(obj: dict, ctx: str, required: tuple, optional: tuple = ()):
    if not isinstance(obj, dict):
        raise SchemaError(f"{ctx}: expected object, got {type(obj).__name__}")
    missing = [k for k in required if k not in obj]
    unknown = [k for k in obj if k not in required and k not in optional]
    problems = []
    if missing:
        problems.append(f"{ctx}: missing fields {missing}")
    if unknown:
        problems.append(f"{ctx}: unknown fields {unknown}")
    if problems:
        raise SchemaError("; ".join(problems))


def load_json_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# qualities

class QualityKind(str, Enum):
    RLAT = "RLat"            # client-side request-response latency, ms
    ELAT = "ELat"            # execution latency, ms
    ECOST = "ECost"          # marginal execution cost, USD
    THROUGHPUT = "Throughput"  # requests/s
    RELIABILITY = "Reliability"  # success fraction in [0, 1]

    @property
    def unit(self) -> str:
        return _UNITS[self]

    @classmethod
    def parse(cls, name: str) -> "QualityKind":
        try:
            return cls(name)
        except ValueError:
            raise SchemaError(f"unknown quality kind {name!r}") from None


_UNITS = {
    QualityKind.RLAT: "ms",
    QualityKind.ELAT: "ms",
    QualityKind.ECOST: "USD",
    QualityKind.THROUGHPUT: "requests/s",
    QualityKind.RELIABILITY: "",
}

# qualities where smaller values are better; the rest improve upward
LOWER_IS_BETTER = frozenset({QualityKind.RLAT, QualityKind.ELAT, QualityKind.ECOST})


def qualities_to_json(qualities: dict) -> dict:
    return {k.value: v for k, v in qualities.items()}


def qualities_from_json(obj: dict, ctx: str = "qualities") -> dict:
    if not isinstance(obj, dict):
        raise SchemaError(f"{ctx}: expected object")
    return {QualityKind.parse(k): float(v) for k, v in obj.items()}


# ---------------------------------------------------------------------------
# knobs and functions

class KnobKind(str, Enum):
    MEMORY = "Memory"
    SLOT_CONCURRENCY = "SlotConcurrency"
    TAG = "Tag"

    @classmethod
    def parse(cls, name: str) -> "KnobKind":
        try:
            return cls(name)
        except ValueError:
            raise SchemaError(f"unknown knob kind {name!r}") from None


@dataclass(frozen=True)
class KnobSpec:
    kind: KnobKind
    domain: tuple = MEMORY_DOMAIN_DEFAULT
    quality_neutral: bool = False

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple(int(v) for v in self.domain))
        if not self.domain:
            raise ValidationError(f"{self.kind.value} knob: domain is empty")
        if any(b <= a for a, b in zip(self.domain, self.domain[1:])):
            raise ValidationError(f"{self.kind.value} knob: domain not strictly increasing")

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "domain": list(self.domain),
                "quality_neutral": self.quality_neutral}

    @classmethod
    def from_json(cls, obj: dict) -> "KnobSpec":
        check_fields(obj, "KnobSpec", ("kind", "domain"), ("quality_neutral",))
        return cls(KnobKind.parse(obj["kind"]), tuple(obj["domain"]),
                   bool(obj.get("quality_neutral", False)))


@dataclass(frozen=True)
class FunctionSpec:
    name: str
    knobs: tuple = (KnobSpec(KnobKind.MEMORY),)
    handler_ref: str = ""

    def __post_init__(self):
        object.__setattr__(self, "knobs", tuple(self.knobs))
        memory = [k for k in self.knobs if k.kind is KnobKind.MEMORY]
        if len(memory) != 1:
            raise ValidationError(f"function {self.name!r}: exactly one memory knob required")

    def knob(self, kind: KnobKind) -> KnobSpec | None:
        for k in self.knobs:
            if k.kind is kind:
                return k
        return None

    @property
    def memory_domain(self) -> tuple:
        return self.knob(KnobKind.MEMORY).domain

    def to_json(self) -> dict:
        return {"name": self.name, "knobs": [k.to_json() for k in self.knobs],
                "handler_ref": self.handler_ref}

    @classmethod
    def from_json(cls, obj: dict) -> "FunctionSpec":
        check_fields(obj, "FunctionSpec", ("name", "knobs"), ("handler_ref",))
        return cls(str(obj["name"]), tuple(KnobSpec.from_json(k) for k in obj["knobs"]),
                   str(obj.get("handler_ref", "")))


# ---------------------------------------------------------------------------
# composition DAG

@dataclass(frozen=True)
class FunctionRef:
    name: str

    def to_json(self):
        return {"kind": "FunctionRef", "name": self.name}


@dataclass(frozen=True)
class Sequence:
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))

    def to_json(self):
        return {"kind": "Sequence", "children": [c.to_json() for c in self.children]}


@dataclass(frozen=True)
class Parallel:
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))

    def to_json(self):
        return {"kind": "Parallel", "children": [c.to_json() for c in self.children]}


@dataclass(frozen=True)
class Switch:
    branches: tuple  # of (probability, node)

    def __post_init__(self):
        object.__setattr__(self, "branches",
                           tuple((float(p), c) for p, c in self.branches))

    def to_json(self):
        return {"kind": "Switch",
                "branches": [{"probability": p, "child": c.to_json()}
                             for p, c in self.branches]}


CompositionNode = FunctionRef | Sequence | Parallel | Switch


def node_from_json(obj: dict) -> CompositionNode:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise SchemaError("composition node: missing 'kind'")
    kind = obj["kind"]
    if kind == "FunctionRef":
        check_fields(obj, "FunctionRef", ("kind", "name"))
        return FunctionRef(str(obj["name"]))
    if kind == "Sequence":
        check_fields(obj, "Sequence", ("kind", "children"))
        return Sequence(tuple(node_from_json(c) for c in obj["children"]))
    if kind == "Parallel":
        check_fields(obj, "Parallel", ("kind", "children"))
        return Parallel(tuple(node_from_json(c) for c in obj["children"]))
    if kind == "Switch":
        check_fields(obj, "Switch", ("kind", "branches"))
        branches = []
        for b in obj["branches"]:
            check_fields(b, "Switch branch", ("probability", "child"))
            branches.append((float(b["probability"]), node_from_json(b["child"])))
        return Switch(tuple(branches))
    raise SchemaError(f"composition node: unknown kind {kind!r}")


def walk_function_refs(node: CompositionNode) -> Iterator[str]:
    if isinstance(node, FunctionRef):
        yield node.name
    elif isinstance(node, (Sequence, Parallel)):
        for c in node.children:
            yield from walk_function_refs(c)
    elif isinstance(node, Switch):
        for _, c in node.branches:
            yield from walk_function_refs(c)


def _check_acyclic(node: CompositionNode, on_path: set, problems: list):
    if id(node) in on_path:
        problems.append("composition contains a cycle")
        return
    on_path.add(id(node))
    children = ()
    if isinstance(node, (Sequence, Parallel)):
        children = node.children
    elif isinstance(node, Switch):
        children = tuple(c for _, c in node.branches)
    for c in children:
        _check_acyclic(c, on_path, problems)
    on_path.discard(id(node))


@dataclass(frozen=True)
class CompositionSpec:
    root: CompositionNode

    def validate(self, function_names) -> list:
        problems = []
        names = set(function_names)
        for ref in walk_function_refs(self.root):
            if ref not in names:
                problems.append(f"composition references unknown function {ref!r}")
        for node in self._all_nodes():
            if isinstance(node, Switch):
                total = sum(p for p, _ in node.branches)
                if abs(total - 1.0) > PROB_TOL:
                    problems.append(f"switch branch probabilities sum to {total}, expected 1")
                if any(p < 0 for p, _ in node.branches):
                    problems.append("switch branch probability is negative")
        _check_acyclic(self.root, set(), problems)
        return problems

    def _all_nodes(self):
        stack, seen = [self.root], []
        while stack:
            node = stack.pop()
            seen.append(node)
            if isinstance(node, (Sequence, Parallel)):
                stack.extend(node.children)
            elif isinstance(node, Switch):
                stack.extend(c for _, c in node.branches)
        return seen

    def to_json(self) -> dict:
        return {"root": self.root.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "CompositionSpec":
        check_fields(obj, "CompositionSpec", ("root",))
        return cls(node_from_json(obj["root"]))


# ---------------------------------------------------------------------------
# system under configuration

@dataclass(frozen=True)
class SystemUnderConfiguration:
    functions: tuple
    composition: CompositionSpec
    name: str = "suc"

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        problems = []
        names = [f.name for f in self.functions]
        if len(set(names)) != len(names):
            problems.append("function names are not unique")
        problems += self.composition.validate(names)
        if problems:
            raise ValidationError(problems)

    def function(self, name: str) -> FunctionSpec:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def function_names(self) -> list:
        return [f.name for f in self.functions]

    def content_hash(self) -> str:
        return sha256(canonical_json(self.to_json()).encode()).hexdigest()

    def to_json(self) -> dict:
        return {"name": self.name,
                "functions": [f.to_json() for f in self.functions],
                "composition": self.composition.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "SystemUnderConfiguration":
        check_fields(obj, "SystemUnderConfiguration",
                     ("functions", "composition"), ("name",))
        return cls(tuple(FunctionSpec.from_json(f) for f in obj["functions"]),
                   CompositionSpec.from_json(obj["composition"]),
                   str(obj.get("name", "suc")))


# ---------------------------------------------------------------------------
# goals

_OPERATORS = {"<=": operator.le, "<": operator.lt, ">=": operator.ge, ">": operator.gt}


@dataclass(frozen=True)
class Bound:
    quality: QualityKind
    op: str
    threshold: float
    unit: str = None

    def __post_init__(self):
        if self.op not in _OPERATORS:
            raise ValidationError(f"unknown comparison operator {self.op!r}")
        if self.unit is None:
            object.__setattr__(self, "unit", self.quality.unit)

    def satisfied(self, value: float) -> bool:
        return _OPERATORS[self.op](value, self.threshold)

    def describe(self) -> str:
        return f"{self.quality.value}{self.op}{self.threshold}{self.unit}"

    def to_json(self) -> dict:
        return {"quality": self.quality.value, "operator": self.op,
                "threshold": self.threshold, "unit": self.unit}

    @classmethod
    def from_json(cls, obj: dict) -> "Bound":
        check_fields(obj, "Bound", ("quality", "operator", "threshold"), ("unit",))
        quality = QualityKind.parse(obj["quality"])
        return cls(quality, str(obj["operator"]), float(obj["threshold"]),
                   str(obj.get("unit", quality.unit)))


@dataclass(frozen=True)
class GoalSpec:
    bounds: tuple = ()
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple(self.bounds))
        object.__setattr__(self, "weights", dict(self.weights))

    def to_json(self) -> dict:
        return {"bounds": [b.to_json() for b in self.bounds],
                "weights": {k.value: w for k, w in self.weights.items()}}

    @classmethod
    def from_json(cls, obj: dict) -> "GoalSpec":
        check_fields(obj, "GoalSpec", (), ("bounds", "weights"))
        bounds = tuple(Bound.from_json(b) for b in obj.get("bounds", []))
        weights = {QualityKind.parse(k): float(v)
                   for k, v in obj.get("weights", {}).items()}
        return cls(bounds, weights)


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violations: tuple = ()

    def to_json(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations)}


def validate_goal(goal: GoalSpec) -> ValidationResult:
    """Check every GoalSpec invariant, reporting all violations at once."""
    violations = []
    if not goal.bounds and not goal.weights:
        violations.append("goal has neither bounds nor weights")
    for kind, w in goal.weights.items():
        if not (0.0 <= w <= 1.0):
            violations.append(f"weight for {kind.value} is {w}, outside [0, 1]")
    if goal.weights:
        total = math.fsum(goal.weights.values())
        if abs(total - 1.0) > PROB_TOL:
            violations.append(f"weights sum to {total:g}")
    for b in goal.bounds:
        if b.unit != b.quality.unit:
            violations.append(
                f"bound {b.describe()}: unit {b.unit!r} does not match "
                f"{b.quality.value}'s unit {b.quality.unit!r}")
        if not math.isfinite(b.threshold):
            violations.append(f"bound {b.describe()}: threshold not finite")
    return ValidationResult(not violations, tuple(violations))


# ---------------------------------------------------------------------------
# policies

@dataclass(frozen=True)
class Policy:
    """Assignment of a knob value to every function: {function: {knob: value}}."""

    assignments: dict

    def __post_init__(self):
        object.__setattr__(
            self, "assignments",
            {fn: dict(knobs) for fn, knobs in self.assignments.items()})

    def memory_of(self, function: str) -> int:
        return self.assignments[function][KnobKind.MEMORY.value]

    def value_of(self, function: str, kind: KnobKind):
        return self.assignments[function].get(kind.value)

    @property
    def total_memory(self) -> int:
        return sum(knobs.get(KnobKind.MEMORY.value, 0)
                   for knobs in self.assignments.values())

    def canonical(self) -> str:
        return canonical_json(self.to_json())

    def __hash__(self):
        return hash(self.canonical())

    def __eq__(self, other):
        return isinstance(other, Policy) and self.assignments == other.assignments

    def validate(self, suc: SystemUnderConfiguration) -> list:
        problems = []
        for fn in suc.functions:
            knobs = self.assignments.get(fn.name)
            if knobs is None:
                problems.append(f"policy misses function {fn.name!r}")
                continue
            for knob in fn.knobs:
                if knob.quality_neutral:
                    continue
                value = knobs.get(knob.kind.value)
                if value is None:
                    problems.append(f"{fn.name}: no value for {knob.kind.value} knob")
                elif value not in knob.domain:
                    problems.append(
                        f"{fn.name}: {knob.kind.value}={value} outside knob domain")
        for name in self.assignments:
            if name not in suc.function_names:
                problems.append(f"policy assigns unknown function {name!r}")
        return problems

    def to_json(self) -> dict:
        return {"assignments": {fn: dict(knobs)
                                for fn, knobs in self.assignments.items()}}

    @classmethod
    def from_json(cls, obj: dict) -> "Policy":
        check_fields(obj, "Policy", ("assignments",))
        assignments = {}
        for fn, knobs in obj["assignments"].items():
            if not isinstance(knobs, dict):
                raise SchemaError(f"Policy assignments for {fn!r}: expected object")
            assignments[fn] = {KnobKind.parse(k).value: int(v) for k, v in knobs.items()}
        return cls(assignments)


def uniform_policy(suc: SystemUnderConfiguration, memory_mb: int | None = None) -> Policy:
    """Policy assigning each non-neutral knob its smallest domain value
    (or `memory_mb` for the memory knob when given)."""
    assignments = {}
    for fn in suc.functions:
        knobs = {}
        for knob in fn.knobs:
            if knob.quality_neutral:
                continue
            if knob.kind is KnobKind.MEMORY and memory_mb is not None:
                knobs[knob.kind.value] = memory_mb
            else:
                knobs[knob.kind.value] = knob.domain[0]
        assignments[fn.name] = knobs
    return Policy(assignments)


# ---------------------------------------------------------------------------
# telemetry and samples

@dataclass(frozen=True)
class TelemetryRecord:
    """Platform-side record of one invocation (see simulator for semantics)."""

    billed_duration: int     # ms, rounded up to the billing quantum
    memory_size: int         # MB actually provisioned for the execution
    cold_start: bool
    billed_cost: float       # USD
    throttled: bool = False
    failed: bool = False

    def to_json(self) -> dict:
        return {"billed_duration": self.billed_duration,
                "memory_size": self.memory_size,
                "cold_start": self.cold_start,
                "billed_cost": self.billed_cost,
                "throttled": self.throttled,
                "failed": self.failed}

    @classmethod
    def from_json(cls, obj: dict) -> "TelemetryRecord":
        check_fields(obj, "TelemetryRecord",
                     ("billed_duration", "memory_size", "cold_start", "billed_cost"),
                     ("throttled", "failed"))
        return cls(int(obj["billed_duration"]), int(obj["memory_size"]),
                   bool(obj["cold_start"]), float(obj["billed_cost"]),
                   bool(obj.get("throttled", False)), bool(obj.get("failed", False)))


@dataclass(frozen=True)
class Sample:
    """One observed run: policy, workload class, measured qualities, telemetry."""

    policy: Policy
    workload_class: str
    qualities: dict
    telemetry: TelemetryRecord | None = None
    valid: bool = True
    invalid_reason: str | None = None
    virtual_timestamp: int = 0

    def __post_init__(self):
        object.__setattr__(self, "qualities", dict(self.qualities))
        for kind, value in self.qualities.items():
            if value < 0:
                raise ValidationError(f"sample quality {kind.value} is negative: {value}")
            if kind is QualityKind.RELIABILITY and value > 1.0:
                raise ValidationError(f"sample Reliability {value} outside [0, 1]")
        if not self.valid and not self.invalid_reason:
            raise ValidationError("invalidated sample carries no reason code")

    def invalidated(self, reason: str) -> "Sample":
        return Sample(self.policy, self.workload_class, self.qualities,
                      self.telemetry, False, reason, self.virtual_timestamp)

    def to_json(self) -> dict:
        return {"policy": self.policy.to_json(),
                "workload_class": self.workload_class,
                "qualities": qualities_to_json(self.qualities),
                "telemetry": self.telemetry.to_json() if self.telemetry else None,
                "valid": self.valid,
                "invalid_reason": self.invalid_reason,
                "virtual_timestamp": self.virtual_timestamp}

    @classmethod
    def from_json(cls, obj: dict) -> "Sample":
        check_fields(obj, "Sample",
                     ("policy", "workload_class", "qualities"),
                     ("telemetry", "valid", "invalid_reason", "virtual_timestamp"))
        telemetry = obj.get("telemetry")
        return cls(Policy.from_json(obj["policy"]),
                   str(obj["workload_class"]),
                   qualities_from_json(obj["qualities"]),
                   TelemetryRecord.from_json(telemetry) if telemetry else None,
                   bool(obj.get("valid", True)),
                   obj.get("invalid_reason"),
                   int(obj.get("virtual_timestamp", 0)))


# ---------------------------------------------------------------------------
# configuration-space operations

def _knob_domains(suc: SystemUnderConfiguration, kind: KnobKind) -> list:
    domains = []
    for fn in suc.functions:
        knob = fn.knob(kind)
        if knob is None:
            raise ValidationError(
                f"unknown knob kind {kind.value!r} on function {fn.name!r}")
        domains.append(knob.domain)
    return domains


def config_space_size(suc: SystemUnderConfiguration,
                      kind: KnobKind = KnobKind.MEMORY) -> int:
    """Product over functions of their knob-domain sizes (exact integer)."""
    return math.prod(len(d) for d in _knob_domains(suc, kind))


def enumerate_policies(suc: SystemUnderConfiguration,
                       kind: KnobKind = KnobKind.MEMORY,
                       cap: int = ENUMERATION_CAP) -> Iterator[Policy]:
    """Yield every policy exactly once, lexicographic in (function, domain) order.

    Knobs other than `kind` are pinned to their smallest domain value so each
    yielded policy is complete and valid.
    """
    size = config_space_size(suc, kind)
    if size > cap:
        raise CapExceededError(f"cap exceeded: {size} policies > cap {cap}")
    domains = _knob_domains(suc, kind)
    base = uniform_policy(suc)
    names = suc.function_names
    for combo in itertools.product(*domains):
        assignments = {fn: dict(base.assignments[fn]) for fn in names}
        for fn, value in zip(names, combo):
            assignments[fn][kind.value] = value
        yield Policy(assignments)
