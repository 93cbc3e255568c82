"""Experiment controller: plans which sizes to sample and executes runs.

Holds the run-reducing strategies (isolated executions, manifold testbeds,
monotonic pruning, constant-knob skipping) and joins client observations
with platform telemetry into Samples. All platform access goes through the
single-writer interface of the simulator; planning functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .core import (
    Bound,
    KnobKind,
    QualityKind,
    Sample,
    SizerError,
    SystemUnderConfiguration,
    ValidationError,
    check_fields,
    uniform_policy,
)
from .workload import (
    Event,
    WorkloadModel,
    invalidation_reason,
    reliability_estimate,
)

RUN_BLOCK_MS_DEFAULT = 30_000
RUNS_PER_SIZE_DEFAULT = 20
THROTTLE_ABORT_FRACTION = 0.05
ISOLATION_RUN_FACTOR = 0.5
ISOLATION_RUN_FLOOR = 3


class ThrottleAbortError(SizerError):
    """Manifold execution exceeded the platform concurrency limit."""

    def __init__(self, message: str, stats: dict):
        super().__init__(message)
        self.stats = stats


class PlanMode(str, Enum):
    SEQUENTIAL = "Sequential"
    MANIFOLD = "Manifold"


@dataclass(frozen=True)
class SamplingPlan:
    function: str
    sizes: tuple
    runs_per_size: int = RUNS_PER_SIZE_DEFAULT
    workload_classes: tuple = ()
    mode: PlanMode = PlanMode.SEQUENTIAL

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "workload_classes", tuple(self.workload_classes))
        if self.runs_per_size < 1:
            raise ValidationError("runs_per_size must be >= 1")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValidationError("plan sizes must be strictly increasing")
        if not self.sizes:
            raise ValidationError("plan has no sizes")

    def validate(self, suc: SystemUnderConfiguration) -> list:
        problems = []
        if self.function not in suc.function_names:
            problems.append(f"plan targets unknown function {self.function!r}")
        else:
            domain = set(suc.function(self.function).memory_domain)
            outside = [s for s in self.sizes if s not in domain]
            if outside:
                problems.append(f"plan sizes {outside} outside the memory knob domain")
        if not self.workload_classes:
            problems.append("plan names no workload classes")
        return problems

    def to_json(self) -> dict:
        return {"function": self.function, "sizes": list(self.sizes),
                "runs_per_size": self.runs_per_size,
                "workload_classes": list(self.workload_classes),
                "mode": self.mode.value}

    @classmethod
    def from_json(cls, obj: dict) -> "SamplingPlan":
        check_fields(obj, "SamplingPlan", ("function", "sizes"),
                     ("runs_per_size", "workload_classes", "mode"))
        return cls(str(obj["function"]), tuple(obj["sizes"]),
                   int(obj.get("runs_per_size", RUNS_PER_SIZE_DEFAULT)),
                   tuple(obj.get("workload_classes", [])),
                   PlanMode(obj.get("mode", "Sequential")))


@dataclass(frozen=True)
class TacticConfig:
    """Which of the nine run-reducing strategies a request switches on."""

    isolate_executions: bool = False          # T1
    automate_ops: bool = True                 # T2 (always true vs the simulator)
    manifold_testbeds: bool = False           # T3
    constant_quality_knobs: tuple = ()        # T4, knob kinds
    monotonic_prune: Bound | None = None      # T5
    assume_function_type: str = "ExponentialDecay"  # T6
    reuse_model: str | bool | None = None     # T7, model reference
    decompose_composition: bool = True        # T8
    workload_classes_known: bool = True       # T9

    def __post_init__(self):
        object.__setattr__(self, "constant_quality_knobs",
                           tuple(KnobKind(k) for k in self.constant_quality_knobs))

    def validate(self) -> list:
        problems = []
        if self.manifold_testbeds and self.monotonic_prune is not None:
            problems.append("manifold_testbeds and monotonic_prune are mutually exclusive")
        if self.assume_function_type not in ("ExponentialDecay", "None"):
            problems.append(f"unknown function type {self.assume_function_type!r}")
        if KnobKind.MEMORY in self.constant_quality_knobs:
            problems.append("the memory knob is the optimization target and "
                            "cannot be marked quality-neutral")
        return problems

    def validated(self) -> "TacticConfig":
        problems = self.validate()
        if problems:
            raise ValidationError(problems)
        return self

    def to_json(self) -> dict:
        return {"isolate_executions": self.isolate_executions,
                "automate_ops": self.automate_ops,
                "manifold_testbeds": self.manifold_testbeds,
                "constant_quality_knobs": [k.value for k in self.constant_quality_knobs],
                "monotonic_prune": self.monotonic_prune.to_json() if self.monotonic_prune else None,
                "assume_function_type": self.assume_function_type,
                "reuse_model": self.reuse_model,
                "decompose_composition": self.decompose_composition,
                "workload_classes_known": self.workload_classes_known}

    @classmethod
    def from_json(cls, obj: dict) -> "TacticConfig":
        check_fields(obj, "TacticConfig", (),
                     ("isolate_executions", "automate_ops", "manifold_testbeds",
                      "constant_quality_knobs", "monotonic_prune",
                      "assume_function_type", "reuse_model",
                      "decompose_composition", "workload_classes_known"))
        prune = obj.get("monotonic_prune")
        return cls(bool(obj.get("isolate_executions", False)),
                   bool(obj.get("automate_ops", True)),
                   bool(obj.get("manifold_testbeds", False)),
                   tuple(obj.get("constant_quality_knobs", [])),
                   Bound.from_json(prune) if prune else None,
                   str(obj.get("assume_function_type", "ExponentialDecay")),
                   obj.get("reuse_model"),
                   bool(obj.get("decompose_composition", True)),
                   bool(obj.get("workload_classes_known", True)))


# ---------------------------------------------------------------------------
# planning

def plan_max_spacing(domain, n_sizes: int) -> list:
    """Pick n_sizes domain members with maximum spacing, endpoints included.

    Real positions are spaced evenly between the endpoints; each is snapped
    to the nearest domain member (ties toward the smaller size) and
    duplicates collapse.
    """
    domain = list(domain)
    if n_sizes < 2:
        raise ValidationError("n_sizes must be >= 2")
    if n_sizes > len(domain):
        raise ValidationError(f"n_sizes {n_sizes} exceeds domain size {len(domain)}")
    lo, hi = domain[0], domain[-1]
    step = (hi - lo) / (n_sizes - 1)
    chosen = []
    for k in range(n_sizes):
        target = lo + k * step
        best = min(domain, key=lambda v: (abs(v - target), v))
        chosen.append(best)
    return sorted(set(chosen))


@dataclass(frozen=True)
class EffectiveDimensions:
    search_knobs: tuple           # KnobSpec still searched
    fixed: dict                   # knob kind -> pinned value
    reduction_factor: int         # config-space shrink from pinning


def skip_constant_knobs(knobs, tactics: TacticConfig) -> EffectiveDimensions:
    """Pin quality-neutral knobs to an arbitrary domain value (the smallest)
    and drop them from the search space."""
    constant = set(tactics.constant_quality_knobs)
    if KnobKind.MEMORY in constant:
        raise ValidationError("the memory knob is the optimization target and "
                              "cannot be marked constant")
    search, fixed, reduction = [], {}, 1
    for knob in knobs:
        if knob.kind in constant or knob.quality_neutral:
            fixed[knob.kind.value] = knob.domain[0]
            reduction *= len(knob.domain)
        else:
            search.append(knob)
    return EffectiveDimensions(tuple(search), fixed, reduction)


def effective_runs_per_size(plan: SamplingPlan, tactics: TacticConfig,
                            factor: float = ISOLATION_RUN_FACTOR,
                            floor: int = ISOLATION_RUN_FLOOR) -> int:
    """Isolated executions carry no co-location noise, so fewer runs suffice."""
    if not tactics.isolate_executions:
        return plan.runs_per_size
    return max(floor, int(plan.runs_per_size * factor))


# ---------------------------------------------------------------------------
# execution

@dataclass
class ExperimentReport:
    plan: SamplingPlan
    tactics: TacticConfig
    samples: list
    omitted_sizes: list
    started_at: int
    finished_at: int
    billed_cost: float
    throttle_stats: dict
    per_size_timing: list
    warnings: list = field(default_factory=list)
    seed: int = 0

    @property
    def elapsed_ms(self) -> int:
        return self.finished_at - self.started_at

    def to_json(self) -> dict:
        return {"plan": self.plan.to_json(),
                "tactics": self.tactics.to_json(),
                "samples": [s.to_json() for s in self.samples],
                "omitted_sizes": list(self.omitted_sizes),
                "started_at": self.started_at,
                "finished_at": self.finished_at,
                "elapsed_ms": self.elapsed_ms,
                "billed_cost": self.billed_cost,
                "throttle_stats": dict(self.throttle_stats),
                "per_size_timing": list(self.per_size_timing),
                "warnings": list(self.warnings),
                "seed": self.seed}


def _policy_for_size(suc: SystemUnderConfiguration, function: str, size: int):
    base = uniform_policy(suc)
    assignments = {fn: dict(v) for fn, v in base.assignments.items()}
    assignments[function][KnobKind.MEMORY.value] = size
    return type(base)(assignments)


def _offsets(runs: int, n_classes: int, run_block_ms: int):
    spacing = run_block_ms / runs
    stagger = spacing / max(n_classes, 1)
    return [[int(i * spacing + j * stagger) for i in range(runs)]
            for j in range(n_classes)]


def _class_lookup(workload_model: WorkloadModel, class_id: str):
    for c in workload_model.classes:
        if c.id == class_id:
            return c
    raise ValidationError(f"plan references unknown workload class {class_id!r}")


def _build_samples(raw_by_size, policies, workload_model: WorkloadModel,
                   run_block_ms: int, filter_flags: dict):
    """Join client observations with telemetry; mark invalid samples.

    Output order is canonical (size, class, run index) regardless of the
    virtual-time interleaving the platform saw.
    """
    overhead = workload_model.client_overhead_ms
    samples = []
    for size in sorted(raw_by_size):
        by_class = {}
        for entry in raw_by_size[size]:
            by_class.setdefault(entry[0], []).append(entry)
        for class_id in sorted(by_class):
            entries = sorted(by_class[class_id], key=lambda e: e[1])  # run index
            ok = sum(1 for _, _, _, res, _ in entries if res.ok)
            window_throughput = ok / (run_block_ms / 1000.0)
            for class_id2, run_idx, at, res, rec in entries:
                qualities = {
                    QualityKind.ELAT: res.elat_ms,
                    QualityKind.RLAT: res.elat_ms + (overhead if not rec.throttled else 0.0),
                    QualityKind.ECOST: rec.billed_cost,
                    QualityKind.RELIABILITY: 1.0 if res.ok else 0.0,
                    QualityKind.THROUGHPUT: window_throughput,
                }
                reason = invalidation_reason(rec, **filter_flags)
                samples.append(Sample(policies[size], class_id2, qualities,
                                      rec, reason is None, reason, at))
    return samples


def _run_size_block(platform, suc, plan, size, at, runs, run_block_ms,
                    workload_model):
    """Deploy one size and execute its run block; returns raw observations."""
    policy = _policy_for_size(suc, plan.function, size)
    dep = platform.deploy(policy, at=at)
    start = dep.converged_at
    offsets = _offsets(runs, len(plan.workload_classes), run_block_ms)
    raw = []
    planned = []
    for j, class_id in enumerate(plan.workload_classes):
        cls = _class_lookup(workload_model, class_id)
        for i in range(runs):
            planned.append((start + offsets[j][i], j, i, cls))
    for issue_at, j, i, cls in sorted(planned):
        event = Event(cls.id, cls.payload_descriptor, issue_at)
        res, rec = platform.invoke(dep.id, plan.function, event, issue_at)
        raw.append((cls.id, i, issue_at, res, rec))
    return policy, raw, start + run_block_ms


def execute_plan(plan: SamplingPlan, tactics: TacticConfig, platform,
                 workload_model: WorkloadModel, *,
                 run_block_ms: int = RUN_BLOCK_MS_DEFAULT,
                 throttle_abort_fraction: float = THROTTLE_ABORT_FRACTION,
                 drop_cold_starts: bool = True, drop_throttled: bool = True,
                 drop_failed_for_latency: bool = True) -> ExperimentReport:
    """Run the plan sequentially or as manifold testbeds.

    Sequential deploys and measures one size at a time; manifold deploys all
    size variants up front as independent deployments and overlaps their run
    blocks, aborting when the platform throttles more than
    `throttle_abort_fraction` of the requests.
    """
    suc = platform.suc
    problems = plan.validate(suc) + tactics.validate()
    if tactics.manifold_testbeds and plan.mode is not PlanMode.MANIFOLD:
        problems.append("tactics enable manifold testbeds but plan mode is Sequential")
    if problems:
        raise ValidationError(problems)

    warnings = []
    if tactics.isolate_executions and platform.config.slot_concurrency > 1:
        warnings.append(
            f"isolation assumed but platform slot_concurrency is "
            f"{platform.config.slot_concurrency}; samples may carry co-location noise")

    runs = effective_runs_per_size(plan, tactics)
    filter_flags = {"drop_cold_starts": drop_cold_starts,
                    "drop_throttled": drop_throttled,
                    "drop_failed_for_latency": drop_failed_for_latency}
    t0 = platform.clock_ms
    raw_by_size, policies = {}, {}
    per_size_timing = []
    throttled_count = 0
    total_planned = len(plan.sizes) * len(plan.workload_classes) * runs

    if plan.mode is PlanMode.SEQUENTIAL:
        t = t0
        for size in plan.sizes:
            policy, raw, block_end = _run_size_block(
                platform, suc, plan, size, t, runs, run_block_ms, workload_model)
            policies[size] = policy
            raw_by_size[size] = raw
            throttled_count += sum(1 for _, _, _, _, rec in raw if rec.throttled)
            per_size_timing.append({"size": size, "deployed_at": t,
                                    "block_end": block_end})
            t = block_end
        finished = t
    else:
        deployments = {}
        for size in plan.sizes:
            policy = _policy_for_size(suc, plan.function, size)
            policies[size] = policy
            deployments[size] = platform.deploy(policy, at=t0)
            raw_by_size[size] = []
        start = max(d.converged_at for d in deployments.values())
        offsets = _offsets(runs, len(plan.workload_classes), run_block_ms)
        planned = []
        for size_idx, size in enumerate(plan.sizes):
            for j, class_id in enumerate(plan.workload_classes):
                cls = _class_lookup(workload_model, class_id)
                for i in range(runs):
                    planned.append((start + offsets[j][i], size_idx, size, j, i, cls))
        allowance = throttle_abort_fraction * total_planned
        for issue_at, _, size, j, i, cls in sorted(planned):
            event = Event(cls.id, cls.payload_descriptor, issue_at)
            res, rec = platform.invoke(deployments[size].id, plan.function,
                                       event, issue_at)
            raw_by_size[size].append((cls.id, i, issue_at, res, rec))
            if rec.throttled:
                throttled_count += 1
                if throttled_count > allowance:
                    raise ThrottleAbortError(
                        "manifold exceeded concurrency limit",
                        {"planned": total_planned,
                         "issued": sum(len(v) for v in raw_by_size.values()),
                         "throttled": throttled_count,
                         "max_concurrent_executions":
                             platform.config.max_concurrent_executions})
        for size in plan.sizes:
            per_size_timing.append({"size": size, "deployed_at": t0,
                                    "block_end": start + run_block_ms})
        finished = start + run_block_ms

    _wait_out_block(platform, finished)
    samples = _build_samples(raw_by_size, policies, workload_model,
                             run_block_ms, filter_flags)
    billed = math.fsum(s.telemetry.billed_cost for s in samples if s.telemetry)
    issued = sum(len(v) for v in raw_by_size.values())
    return ExperimentReport(plan=plan, tactics=tactics, samples=samples,
                            omitted_sizes=[], started_at=t0, finished_at=finished,
                            billed_cost=billed,
                            throttle_stats={"requests": issued,
                                            "throttled": throttled_count},
                            per_size_timing=per_size_timing, warnings=warnings,
                            seed=platform.config.rng_seed)


def _wait_out_block(platform, until: int):
    advance = getattr(platform, "advance_clock", None)
    if advance is not None:
        advance(until)


# improving direction of each quality as memory grows; cost is the exception
_IMPROVES_WITH_SIZE = {
    QualityKind.ELAT: True, QualityKind.RLAT: True,
    QualityKind.RELIABILITY: True, QualityKind.THROUGHPUT: True,
    QualityKind.ECOST: False,
}


def monotonic_prune_sweep(plan: SamplingPlan, bound: Bound, tactics: TacticConfig,
                          platform, workload_model: WorkloadModel, *,
                          run_block_ms: int = RUN_BLOCK_MS_DEFAULT,
                          drop_cold_starts: bool = True, drop_throttled: bool = True,
                          drop_failed_for_latency: bool = True) -> ExperimentReport:
    """Sweep sizes best-quality-first and stop once the bound is violated.

    All sizes on the worse side of the first violation are omitted; samples
    for visited sizes are identical to an unpruned sweep's (the platform's
    noise streams are keyed per size and run, not by global order).
    """
    if plan.mode is not PlanMode.SEQUENTIAL:
        raise ValidationError("monotonic pruning requires a Sequential plan")
    problems = plan.validate(platform.suc) + tactics.validate()
    if problems:
        raise ValidationError(problems)

    runs = effective_runs_per_size(plan, tactics)
    filter_flags = {"drop_cold_starts": drop_cold_starts,
                    "drop_throttled": drop_throttled,
                    "drop_failed_for_latency": drop_failed_for_latency}
    sweep = sorted(plan.sizes, reverse=_IMPROVES_WITH_SIZE[bound.quality])
    t0 = platform.clock_ms
    t = t0
    raw_by_size, policies, per_size_timing = {}, {}, []
    omitted = []
    for idx, size in enumerate(sweep):
        policy, raw, block_end = _run_size_block(
            platform, platform.suc, plan, size, t, runs, run_block_ms,
            workload_model)
        policies[size] = policy
        raw_by_size[size] = raw
        per_size_timing.append({"size": size, "deployed_at": t,
                                "block_end": block_end})
        t = block_end
        measured = _aggregate_bound_quality(size, policy, raw, bound,
                                            filter_flags, workload_model,
                                            run_block_ms)
        if not bound.satisfied(measured):
            omitted = sweep[idx + 1:]
            break

    _wait_out_block(platform, t)
    samples = _build_samples(raw_by_size, policies, workload_model,
                             run_block_ms, filter_flags)
    billed = math.fsum(s.telemetry.billed_cost for s in samples if s.telemetry)
    issued = sum(len(v) for v in raw_by_size.values())
    throttled = sum(1 for v in raw_by_size.values()
                    for _, _, _, _, rec in v if rec.throttled)
    return ExperimentReport(plan=plan, tactics=tactics, samples=samples,
                            omitted_sizes=sorted(omitted), started_at=t0,
                            finished_at=t, billed_cost=billed,
                            throttle_stats={"requests": issued,
                                            "throttled": throttled},
                            per_size_timing=per_size_timing,
                            warnings=[], seed=platform.config.rng_seed)


def _aggregate_bound_quality(size, policy, raw, bound: Bound, filter_flags,
                             workload_model, run_block_ms) -> float:
    """Mean of the bounded quality over the size's valid samples
    (reliability over all of them)."""
    samples = _build_samples({size: raw}, {size: policy}, workload_model,
                             run_block_ms, filter_flags)
    if bound.quality is QualityKind.RELIABILITY:
        return reliability_estimate(samples)
    values = [s.qualities[bound.quality] for s in samples if s.valid]
    if not values:
        raise ValidationError(
            f"bound on {bound.quality.value} but no valid sample measures it")
    return math.fsum(values) / len(values)
