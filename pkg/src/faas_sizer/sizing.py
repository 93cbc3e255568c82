"""Size finder and sizing controller.

Scores candidates with the max-normalized weighted-sum function, filters by
absolute bounds, aggregates per-function quality models over the composition
DAG, and searches the memory-size space either exhaustively (the oracle for
small spaces) or with simulated annealing.

Both search paths share one set of per-quality normalizers: the maximum of
each quality over the whole candidate space, computed analytically as the
aggregate of per-function maxima (exact, because every aggregation rule is
monotone in its children). For the exhaustive search this coincides with
normalizing over the evaluated candidate set itself; sharing it keeps
annealing scores directly comparable to the oracle's. Callers can override
the normalizers to study other normalization choices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from hashlib import sha256
from random import Random

from .core import (
    Bound,
    CapExceededError,
    FunctionRef,
    GoalSpec,
    InfeasibleError,
    KnobKind,
    LOWER_IS_BETTER,
    Parallel,
    Policy,
    QualityKind,
    Sequence,
    Switch,
    SystemUnderConfiguration,
    ValidationError,
    canonical_json,
    check_fields,
    config_space_size,
    enumerate_policies,
    qualities_from_json,
    qualities_to_json,
    validate_goal,
)
from .experiment import (
    PlanMode,
    RUNS_PER_SIZE_DEFAULT,
    RUN_BLOCK_MS_DEFAULT,
    SamplingPlan,
    TacticConfig,
    execute_plan,
    monotonic_prune_sweep,
    plan_max_spacing,
    skip_constant_knobs,
)
from .modeling import (
    CostParams,
    ModelKey,
    ModelStore,
    build_model_from_samples,
    get_or_build_model,
)
from .workload import (
    Event,
    WorkloadModel,
    generate_events,
    run_composition,
    validate_and_filter,
)

BRUTE_FORCE_CAP = 10**6
JOINT_SAMPLING_CAP = 4096
PARETO_CAP = 1024
_EPS = 1e-9


# ---------------------------------------------------------------------------
# the weighted-sum scoring function

def zf_score(requests, weights: dict) -> float:
    """Mean over requests of the per-quality weighted, max-normalized sum.

    Each quality is normalized by its maximum over the request set; a
    quality whose maximum is zero contributes nothing (all-zero is vacuously
    optimal). Raises on an empty request set.
    """
    requests = list(requests)
    if not requests:
        raise ValidationError("ZF over an empty request set")
    maxima = {}
    for q in weights:
        values = [r[q] for r in requests]
        if any(not math.isfinite(v) for v in values):
            raise ValidationError(f"{q.value} contains non-finite values")
        maxima[q] = max(values)
    total = 0.0
    for r in requests:
        for q, w in weights.items():
            if maxima[q] > 0:
                total += w * r[q] / maxima[q]
    return total / len(requests)


@dataclass(frozen=True)
class ZFScorer:
    """Per-candidate score with fixed normalizers (see module docstring)."""

    weights: dict
    normalizers: dict

    def score(self, qualities: dict) -> float:
        total = 0.0
        for q, w in self.weights.items():
            m = self.normalizers.get(q, 0.0)
            if m > 0:
                total += w * qualities[q] / m
        return total


def candidate_normalizers(predictions, kinds) -> dict:
    """Per-quality maxima over an explicit candidate set."""
    return {q: max(p[q] for p in predictions) for q in kinds}


# ---------------------------------------------------------------------------
# bounds

def filter_bounds(candidates, bounds) -> list:
    """Keep exactly the (policy, predicted) candidates satisfying all bounds."""
    for b in bounds:
        for _, predicted in candidates:
            if b.quality not in predicted:
                raise ValidationError(
                    f"bound on {b.quality.value} but candidates carry no "
                    f"prediction for it")
    return [(p, q) for p, q in candidates
            if all(b.satisfied(q[b.quality]) for b in bounds)]


def bound_violation_excess(qualities: dict, bounds) -> float:
    """Total normalized excess over violated bounds (0 when feasible)."""
    excess = 0.0
    for b in bounds:
        value = qualities[b.quality]
        if b.satisfied(value):
            continue
        scale = max(abs(b.threshold), _EPS)
        excess += abs(value - b.threshold) / scale
    return excess


# ---------------------------------------------------------------------------
# composition aggregation

def aggregate_composition(node, per_function: dict) -> dict:
    """Aggregate per-function qualities over a composition node.

    Latency (ELat/RLat): sequences sum, parallels take the max, switches take
    the expectation. Cost: sum over executed functions (expectation across
    switch branches). Reliability: product (expectation across branches).
    Throughput is per-function only and never aggregated.
    """
    if not per_function:
        raise ValidationError("no per-function predictions to aggregate")
    kinds = None
    for qualities in per_function.values():
        present = {k for k in qualities if k is not QualityKind.THROUGHPUT}
        kinds = present if kinds is None else kinds & present
    return _aggregate(node, per_function, tuple(sorted(kinds, key=lambda k: k.value)))


def _aggregate(node, per_function, kinds) -> dict:
    if isinstance(node, FunctionRef):
        if node.name not in per_function:
            raise ValidationError(f"dangling FunctionRef {node.name!r}")
        return {k: per_function[node.name][k] for k in kinds}
    if isinstance(node, (Sequence, Parallel)):
        children = [_aggregate(c, per_function, kinds) for c in node.children]
        out = {}
        for k in kinds:
            values = [c[k] for c in children]
            if k is QualityKind.RELIABILITY:
                out[k] = math.prod(values) if values else 1.0
            elif k is QualityKind.ECOST:
                out[k] = math.fsum(values)
            elif isinstance(node, Sequence):
                out[k] = math.fsum(values)
            else:
                out[k] = max(values) if values else 0.0
        return out
    if isinstance(node, Switch):
        branches = [(p, _aggregate(c, per_function, kinds))
                    for p, c in node.branches]
        return {k: math.fsum(p * agg[k] for p, agg in branches) for k in kinds}
    raise ValidationError(f"unknown composition node {type(node).__name__}")


# ---------------------------------------------------------------------------
# results

@dataclass
class SizingResult:
    policy: Policy
    predicted: dict
    zf_score: float
    pareto_front: list = field(default_factory=list)  # (policy, predicted, zf)
    search_stats: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    infeasible: bool = False
    nearest_miss: dict | None = None

    def to_json(self) -> dict:
        return {"policy": self.policy.to_json(),
                "predicted": qualities_to_json(self.predicted),
                "zf_score": self.zf_score,
                "pareto_front": [{"policy": p.to_json(),
                                  "predicted": qualities_to_json(q),
                                  "zf": z}
                                 for p, q, z in self.pareto_front],
                "search_stats": dict(self.search_stats),
                "provenance": dict(self.provenance),
                "infeasible": self.infeasible,
                "nearest_miss": self.nearest_miss}


def _nearest_miss_json(policy: Policy, predicted: dict, bounds) -> dict:
    violated = [b.describe() for b in bounds if not b.satisfied(predicted[b.quality])]
    return {"policy": policy.to_json(),
            "predicted": qualities_to_json(predicted),
            "violated_bounds": violated}


def pareto_front(candidates, kinds) -> list:
    """Non-dominated subset of (policy, predicted) over the given kinds."""
    kinds = [k for k in kinds]

    def better_or_equal(a, b, k):
        return a[k] <= b[k] if k in LOWER_IS_BETTER else a[k] >= b[k]

    def dominates(a, b):
        return (all(better_or_equal(a, b, k) for k in kinds)
                and any(a[k] != b[k] for k in kinds))

    front = []
    for i, (policy, predicted) in enumerate(candidates):
        if not any(dominates(other, predicted)
                   for j, (_, other) in enumerate(candidates) if j != i):
            front.append((policy, predicted))
    return front


# ---------------------------------------------------------------------------
# exhaustive search (the oracle)

def brute_force_match(candidates, goal: GoalSpec, predict_fn, *,
                      cap: int = BRUTE_FORCE_CAP,
                      normalizers: dict | None = None) -> SizingResult:
    """Enumerate every candidate policy and return the minimal-ZF feasible one.

    Ties break toward the smallest total memory, then enumeration order.
    When nothing is feasible the result is marked infeasible and carries the
    nearest-miss policy (smallest total normalized bound excess).
    """
    evaluated = []
    for policy in candidates:
        if len(evaluated) >= cap:
            raise CapExceededError(f"cap exceeded: more than {cap} candidates")
        evaluated.append((policy, predict_fn(policy)))
    if not evaluated:
        raise ValidationError("empty candidate space")

    kinds = _involved_kinds(goal)
    for _, predicted in evaluated:
        missing = [k.value for k in kinds if k not in predicted]
        if missing:
            raise ValidationError(f"candidates carry no prediction for {missing}")
    if normalizers is None:
        normalizers = candidate_normalizers([q for _, q in evaluated], kinds)
    scorer = ZFScorer(goal.weights, normalizers)

    feasible = filter_bounds(evaluated, goal.bounds)
    stats = {"iterations": len(evaluated), "evaluations": len(evaluated),
             "elapsed_virtual_ms": 0}
    if not feasible:
        nearest = min(
            evaluated,
            key=lambda cq: (bound_violation_excess(cq[1], goal.bounds),
                            cq[0].total_memory))
        front = _scored_front(evaluated, scorer, kinds)
        return SizingResult(policy=nearest[0], predicted=nearest[1],
                            zf_score=scorer.score(nearest[1]),
                            pareto_front=front, search_stats=stats,
                            provenance={"method": "brute_force"},
                            infeasible=True,
                            nearest_miss=_nearest_miss_json(*nearest, goal.bounds))

    best = min(enumerate(feasible),
               key=lambda item: (scorer.score(item[1][1]),
                                 item[1][0].total_memory, item[0]))[1]
    front = _scored_front(feasible, scorer, kinds)
    return SizingResult(policy=best[0], predicted=best[1],
                        zf_score=scorer.score(best[1]), pareto_front=front,
                        search_stats=stats,
                        provenance={"method": "brute_force"})


def _involved_kinds(goal: GoalSpec) -> tuple:
    kinds = set(goal.weights) | {b.quality for b in goal.bounds}
    return tuple(sorted(kinds, key=lambda k: k.value))


def _scored_front(candidates, scorer: ZFScorer, kinds) -> list:
    pool = sorted(candidates, key=lambda cq: (scorer.score(cq[1]),
                                              cq[0].total_memory))[:PARETO_CAP]
    front = pareto_front(pool, kinds) if kinds else pool[:1]
    scored = [(p, q, scorer.score(q)) for p, q in front]
    scored.sort(key=lambda x: (x[2], x[0].total_memory))
    return scored


# ---------------------------------------------------------------------------
# simulated annealing

@dataclass(frozen=True)
class AnnealSchedule:
    t0: float = 1.0
    alpha: float = 0.95
    steps_per_temp: int = 200
    t_floor: float = 1e-4


@dataclass(frozen=True)
class FunctionQualityTable:
    """Precomputed per-size qualities for one function (search working set)."""

    function: str
    sizes: tuple
    qualities: tuple  # dict per size, same order

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(self.sizes))
        object.__setattr__(self, "qualities", tuple(self.qualities))


def analytic_normalizers(suc: SystemUnderConfiguration, tables: dict,
                         kinds, client_overhead_ms: float = 0.0) -> dict:
    """Exact per-quality maxima over the whole joint space.

    Aggregation rules are monotone and the per-function choices independent,
    so the maximum of the aggregate equals the aggregate of the per-function
    maxima.
    """
    per_function_max = {}
    for fn, table in tables.items():
        per_function_max[fn] = {
            k: max(q[k] for q in table.qualities)
            for k in table.qualities[0]}
    agg = aggregate_composition(suc.composition.root, per_function_max)
    agg[QualityKind.RLAT] = agg[QualityKind.ELAT] + client_overhead_ms
    return {k: agg[k] for k in kinds if k in agg}


def _aggregate_tables(suc, tables, state, client_overhead_ms) -> dict:
    per_function = {fn: tables[fn].qualities[idx]
                    for fn, idx in zip(tables, state)}
    agg = aggregate_composition(suc.composition.root, per_function)
    agg[QualityKind.RLAT] = agg[QualityKind.ELAT] + client_overhead_ms
    return agg


def _policy_from_state(suc, tables, state) -> Policy:
    from .core import uniform_policy
    base = uniform_policy(suc)
    assignments = {fn: dict(v) for fn, v in base.assignments.items()}
    for fn, idx in zip(tables, state):
        assignments[fn][KnobKind.MEMORY.value] = tables[fn].sizes[idx]
    return Policy(assignments)


def anneal_match(suc: SystemUnderConfiguration, goal: GoalSpec, tables: dict,
                 schedule: AnnealSchedule | None = None, seed: int = 0, *,
                 normalizers: dict | None = None,
                 client_overhead_ms: float = 0.0) -> SizingResult:
    """Simulated annealing over one-size-per-function states.

    A step re-draws one function's size within a temperature-scaled window of
    domain indices; bound violations add a penalty (normalized excess) rather
    than rejecting the state, and the best feasible state ever visited is
    returned. Deterministic for a fixed (seed, schedule).
    """
    if not tables:
        raise ValidationError("empty search space")
    schedule = schedule or AnnealSchedule()
    kinds = _involved_kinds(goal)
    if normalizers is None:
        normalizers = analytic_normalizers(suc, tables, kinds, client_overhead_ms)
    scorer = ZFScorer(goal.weights, normalizers)
    rng = Random(seed)
    names = list(tables)
    domain_len = {fn: len(tables[fn].sizes) for fn in names}

    def evaluate(state):
        agg = _aggregate_tables(suc, tables, state, client_overhead_ms)
        missing = [k.value for k in kinds if k not in agg]
        if missing:
            raise ValidationError(f"candidates carry no prediction for {missing}")
        score = scorer.score(agg)
        excess = bound_violation_excess(agg, goal.bounds)
        return score + excess, score, excess == 0.0, agg

    state = tuple(rng.randrange(domain_len[fn]) for fn in names)
    energy, score, feasible, agg = evaluate(state)
    evaluations = 1
    best_feasible = (score, state, agg) if feasible else None
    best_any = (energy, state, agg)

    iterations = 0
    temperature = schedule.t0
    feasible_seen = []
    if feasible:
        feasible_seen.append((state, agg, score))
    while temperature > schedule.t_floor:
        for _ in range(schedule.steps_per_temp):
            iterations += 1
            fi = rng.randrange(len(names))
            fn = names[fi]
            length = domain_len[fn]
            if length > 1:
                window = max(1, round(temperature / schedule.t0 * (length - 1)))
                delta = rng.randint(-window, window)
                idx = state[fi]
                new_idx = min(length - 1, max(0, idx + delta))
                if new_idx == idx:
                    new_idx = idx + 1 if idx + 1 < length else idx - 1
                candidate = state[:fi] + (new_idx,) + state[fi + 1:]
            else:
                candidate = state
            cand_energy, cand_score, cand_feasible, cand_agg = evaluate(candidate)
            evaluations += 1
            delta_e = cand_energy - energy
            if delta_e <= 0 or rng.random() < math.exp(-delta_e / temperature):
                state, energy = candidate, cand_energy
            if cand_energy < best_any[0]:
                best_any = (cand_energy, candidate, cand_agg)
            if cand_feasible:
                feasible_seen.append((candidate, cand_agg, cand_score))
                if (best_feasible is None
                        or (cand_score, _total_memory(tables, candidate))
                        < (best_feasible[0], _total_memory(tables, best_feasible[1]))):
                    best_feasible = (cand_score, candidate, cand_agg)
        temperature *= schedule.alpha

    stats = {"iterations": iterations, "evaluations": evaluations,
             "elapsed_virtual_ms": 0}
    provenance = {"method": "anneal", "seed": seed}
    if iterations == 0:
        provenance["notes"] = "unoptimized: zero-iteration budget"
    if best_feasible is None:
        _, miss_state, miss_agg = best_any
        policy = _policy_from_state(suc, tables, miss_state)
        return SizingResult(policy=policy, predicted=miss_agg,
                            zf_score=scorer.score(miss_agg),
                            pareto_front=[],
                            search_stats=stats, provenance=provenance,
                            infeasible=True,
                            nearest_miss=_nearest_miss_json(policy, miss_agg,
                                                            goal.bounds))
    best_score, best_state, best_agg = best_feasible
    policy = _policy_from_state(suc, tables, best_state)
    front = _front_from_visits(suc, tables, feasible_seen, kinds)
    return SizingResult(policy=policy, predicted=best_agg, zf_score=best_score,
                        pareto_front=front, search_stats=stats,
                        provenance=provenance)


def _total_memory(tables, state) -> int:
    return sum(tables[fn].sizes[idx] for fn, idx in zip(tables, state))


def _front_from_visits(suc, tables, visits, kinds) -> list:
    seen = {}
    for state, agg, score in visits:
        seen.setdefault(state, (agg, score))
    pool = sorted(seen.items(),
                  key=lambda kv: (kv[1][1], _total_memory(tables, kv[0])))
    entries = [(_policy_from_state(suc, tables, s), agg, score)
               for s, (agg, score) in pool[:PARETO_CAP]]
    candidates = [(p, agg) for p, agg, _ in entries]
    front = pareto_front(candidates, kinds) if kinds else candidates[:1]
    kept = {id(p) for p, _ in front}
    scored = [(p, agg, score) for p, agg, score in entries if id(p) in kept]
    scored.sort(key=lambda x: (x[2], x[0].total_memory))
    return scored


# ---------------------------------------------------------------------------
# sample-based selection (sweep results)

def choose_from_sweep(report, goal: GoalSpec):
    """Pick the best size directly from sweep samples.

    Per-size means of the measured qualities (reliability over the full
    pre-filter set) are filtered by the goal bounds and scored with maxima
    taken over the visited sizes; ties go to the smaller size.
    Returns (size, per_size_table).
    """
    function = report.plan.function
    by_size = {}
    for s in report.samples:
        by_size.setdefault(s.policy.memory_of(function), []).append(s)

    table = {}
    for size, samples in sorted(by_size.items()):
        valid = [s for s in samples if s.valid]
        means = {}
        for kind in (QualityKind.ELAT, QualityKind.RLAT, QualityKind.ECOST):
            values = [s.qualities[kind] for s in valid]
            if values:
                means[kind] = math.fsum(values) / len(values)
        ok = sum(1 for s in samples
                 if s.telemetry and not s.telemetry.failed
                 and not s.telemetry.throttled)
        means[QualityKind.RELIABILITY] = ok / len(samples)
        table[size] = means

    kinds = _involved_kinds(goal)
    candidates = [(size, means) for size, means in table.items()
                  if all(k in means for k in kinds)]
    if len(candidates) < len(table):
        raise ValidationError("sweep samples do not measure every goal quality")
    feasible = [(size, means) for size, means in candidates
                if all(b.satisfied(means[b.quality]) for b in goal.bounds)]
    if not feasible:
        raise InfeasibleError("no visited size satisfies the goal bounds")
    normalizers = candidate_normalizers([m for _, m in candidates], kinds)
    scorer = ZFScorer(goal.weights, normalizers)
    best = min(feasible, key=lambda sm: (scorer.score(sm[1]), sm[0]))
    return best[0], table


# ---------------------------------------------------------------------------
# request/orchestration layer

@dataclass(frozen=True)
class SizingRequest:
    """Wire form of one sizing request (CLI and HTTP share it)."""

    target: dict                   # {"suc": "registered"} | {"models": [keys]}
    goal: GoalSpec
    tactics: TacticConfig
    workload: WorkloadModel | None = None
    apply: bool = False

    def validate(self) -> list:
        problems = list(validate_goal(self.goal).violations)
        problems += self.tactics.validate()
        has_suc = "suc" in self.target
        has_models = "models" in self.target
        if has_suc == has_models:
            problems.append("target must name exactly one of a SUC or model references")
        if has_models and not self.tactics.reuse_model:
            problems.append("model references as target require tactics.reuse_model")
        return problems

    def to_json(self) -> dict:
        return {"target": dict(self.target),
                "goal": self.goal.to_json(),
                "tactics": self.tactics.to_json(),
                "workload": self.workload.to_json() if self.workload else None,
                "apply": self.apply}

    @classmethod
    def from_json(cls, obj: dict) -> "SizingRequest":
        check_fields(obj, "SizingRequest", ("target", "goal", "tactics"),
                     ("workload", "apply"))
        workload = obj.get("workload")
        return cls(dict(obj["target"]), GoalSpec.from_json(obj["goal"]),
                   TacticConfig.from_json(obj["tactics"]),
                   WorkloadModel.from_json(workload) if workload else None,
                   bool(obj.get("apply", False)))


@dataclass
class RunArtifacts:
    """Everything the evaluation module needs about one sizing run."""

    experiment_reports: list = field(default_factory=list)
    model_keys: list = field(default_factory=list)
    model_provenance: dict = field(default_factory=dict)
    sampling_cost: float = 0.0
    sample_time_ms: int = 0
    platform_invocations: int = 0
    request_started_at: int = 0
    finished_at: int = 0


def class_weights_for(workload_model: WorkloadModel, known: bool) -> dict:
    """Expectation weights across workload classes (uniform when the mix is
    assumed unknown)."""
    ids = workload_model.class_ids
    if known:
        return {c.id: c.relative_frequency for c in workload_model.classes}
    return {cid: 1.0 / len(ids) for cid in ids}


def build_quality_tables(suc: SystemUnderConfiguration, models: dict,
                         class_weights: dict) -> dict:
    """Per-function, per-size expected qualities over the class mix.

    `models` maps (function, class) to a QualityModel. RLat is intentionally
    absent: compositions add the client overhead once, at the top.
    """
    tables = {}
    for fn in suc.functions:
        domain = fn.memory_domain
        rows = []
        for size in domain:
            q = {QualityKind.ELAT: 0.0, QualityKind.ECOST: 0.0,
                 QualityKind.RELIABILITY: 0.0}
            for cid, weight in class_weights.items():
                model = models[(fn.name, cid)]
                q[QualityKind.ELAT] += weight * model.elat(size)
                q[QualityKind.ECOST] += weight * model.ecost(size)
                q[QualityKind.RELIABILITY] += weight * model.reliability(size)
            rows.append(q)
        tables[fn.name] = FunctionQualityTable(fn.name, domain, rows)
    return tables


def _model_source_hash(suc_hash: str, platform_fingerprint: str,
                       plan: SamplingPlan, workload_class: str) -> str:
    payload = canonical_json({"suc": suc_hash, "platform": platform_fingerprint,
                              "plan": plan.to_json(), "class": workload_class})
    return sha256(payload.encode()).hexdigest()


def run_sizing(suc: SystemUnderConfiguration, goal: GoalSpec,
               workload_model: WorkloadModel, tactics: TacticConfig,
               platform, store: ModelStore, *, seed: int = 0,
               n_sizes: int = 5, runs_per_size: int = RUNS_PER_SIZE_DEFAULT,
               run_block_ms: int = RUN_BLOCK_MS_DEFAULT, method: str = "auto",
               apply: bool = False, brute_force_cap: int = BRUTE_FORCE_CAP,
               joint_cap: int = JOINT_SAMPLING_CAP,
               schedule: AnnealSchedule | None = None):
    """End-to-end sizing: obtain models (cache or experiment), search, apply.

    Returns (SizingResult, RunArtifacts).
    """
    check = validate_goal(goal)
    if not check.ok:
        raise ValidationError(check.violations)
    tactics.validated()

    artifacts = RunArtifacts(request_started_at=platform.clock_ms)
    cost_before = platform.total_billed_cost()
    invocations_before = platform.invocation_count

    if not tactics.decompose_composition:
        result = _run_joint_sizing(suc, goal, workload_model, tactics, platform,
                                   seed=seed, runs_per_policy=runs_per_size,
                                   joint_cap=joint_cap)
        artifacts.sample_time_ms = platform.clock_ms - artifacts.request_started_at
    else:
        models, provenance = _obtain_models(
            suc, workload_model, tactics, platform, store, artifacts,
            n_sizes=n_sizes, runs_per_size=runs_per_size,
            run_block_ms=run_block_ms)
        artifacts.model_keys = sorted(str(k) for k in models)
        artifacts.model_provenance = {str(k): v["source"]
                                      for k, v in provenance.items()}
        artifacts.sample_time_ms = sum(r.elapsed_ms
                                       for r in artifacts.experiment_reports)
        result = _search_models(suc, goal, workload_model, tactics, models,
                                method=method, seed=seed, schedule=schedule,
                                brute_force_cap=brute_force_cap)
        result.provenance["model_keys"] = artifacts.model_keys
        result.provenance["model_provenance"] = dict(artifacts.model_provenance)
        warnings = sorted({w for v in provenance.values() for w in v["warnings"]})
        if warnings:
            result.provenance["warnings"] = warnings

    artifacts.sampling_cost = platform.total_billed_cost() - cost_before
    artifacts.platform_invocations = platform.invocation_count - invocations_before
    artifacts.finished_at = platform.clock_ms
    result.provenance["tactics"] = tactics.to_json()
    result.provenance["seed"] = seed
    skipped = {}
    for fn in suc.functions:
        dims = skip_constant_knobs(fn.knobs, tactics)
        if dims.fixed:
            skipped[fn.name] = {"fixed": dims.fixed,
                                "reduction_factor": dims.reduction_factor}
    if skipped:
        result.provenance["skipped_knobs"] = skipped

    if apply and not result.infeasible:
        platform.deploy(result.policy)
    return result, artifacts


def _plan_for_function(fn, workload_model, tactics, n_sizes, runs_per_size):
    domain = fn.memory_domain
    if len(domain) < 2:
        sizes = list(domain)
    else:
        sizes = plan_max_spacing(domain, min(n_sizes, len(domain)))
    mode = PlanMode.MANIFOLD if tactics.manifold_testbeds else PlanMode.SEQUENTIAL
    return SamplingPlan(fn.name, sizes, runs_per_size,
                        tuple(workload_model.class_ids), mode)


def _obtain_models(suc, workload_model, tactics, platform, store, artifacts,
                   *, n_sizes, runs_per_size, run_block_ms):
    suc_hash = suc.content_hash()
    fingerprint = getattr(platform, "fingerprint", lambda: "")()
    models, provenance = {}, {}
    for fn in suc.functions:
        plan = _plan_for_function(fn, workload_model, tactics, n_sizes,
                                  runs_per_size)
        memo = {}

        def run_experiment(plan=plan):
            if "report" not in memo:
                if tactics.monotonic_prune is not None:
                    memo["report"] = monotonic_prune_sweep(
                        plan, tactics.monotonic_prune, tactics, platform,
                        workload_model, run_block_ms=run_block_ms)
                else:
                    memo["report"] = execute_plan(
                        plan, tactics, platform, workload_model,
                        run_block_ms=run_block_ms)
                artifacts.experiment_reports.append(memo["report"])
            return memo["report"]

        cost_params = CostParams(platform.config.price_per_gb_second,
                                 platform.config.price_per_invocation,
                                 platform.config.billing_quantum)
        for cid in workload_model.class_ids:
            key = ModelKey(suc_hash, fn.name, cid)
            source_hash = _model_source_hash(suc_hash, fingerprint, plan, cid)

            def build(fn=fn, cid=cid, source_hash=source_hash):
                report = run_experiment()
                class_samples = [s for s in report.samples
                                 if s.workload_class == cid]
                return build_model_from_samples(
                    fn.name, cid, class_samples, cost_params,
                    created_at=platform.clock_ms, source_hash=source_hash,
                    client_overhead_ms=workload_model.client_overhead_ms)

            model, prov = get_or_build_model(key, source_hash, store, tactics,
                                             build, now_ms=platform.clock_ms)
            models[(fn.name, cid)] = model
            provenance[key] = prov
    return models, provenance


def _search_models(suc, goal, workload_model, tactics, models, *, method,
                   seed, schedule, brute_force_cap):
    class_weights = class_weights_for(workload_model,
                                      tactics.workload_classes_known)
    tables = build_quality_tables(suc, models, class_weights)
    overhead = workload_model.client_overhead_ms
    kinds = _involved_kinds(goal)
    normalizers = analytic_normalizers(suc, tables, kinds, overhead)

    if method == "auto":
        space = config_space_size(suc)
        method = "brute_force" if space <= brute_force_cap else "anneal"
    if method == "anneal":
        return anneal_match(suc, goal, tables, schedule, seed,
                            normalizers=normalizers,
                            client_overhead_ms=overhead)
    if method != "brute_force":
        raise ValidationError(f"unknown search method {method!r}")

    index = {fn: {size: i for i, size in enumerate(table.sizes)}
             for fn, table in tables.items()}

    def predict_fn(policy):
        state = tuple(index[fn][policy.memory_of(fn)] for fn in tables)
        return _aggregate_tables(suc, tables, state, overhead)

    result = brute_force_match(enumerate_policies(suc, cap=brute_force_cap),
                               goal, predict_fn, cap=brute_force_cap,
                               normalizers=normalizers)
    return result


def _run_joint_sizing(suc, goal, workload_model, tactics, platform, *,
                      seed, runs_per_policy, joint_cap):
    """No-decomposition fallback: measure every joint policy end to end.

    Expensive by design (the honest no-assumptions baseline): each policy is
    deployed and driven with whole-composition client runs; per-policy means
    feed the same bound filter and scoring as the model-backed path.
    """
    space = config_space_size(suc)
    if space > joint_cap:
        raise CapExceededError(
            f"joint sampling over {space} policies exceeds cap {joint_cap}")
    events = generate_events(workload_model, runs_per_policy, seed)
    overhead = workload_model.client_overhead_ms
    evaluated = []
    for policy in enumerate_policies(suc, cap=joint_cap):
        dep = platform.deploy(policy)
        t = dep.converged_at
        runs = []
        for i, event in enumerate(events):
            run = run_composition(platform, dep, event, int(math.ceil(t)),
                                  seed=seed, run_index=i)
            runs.append(run)
            t = max(t + 1, run.finished_at)
        clean = [r for r in runs if r.success and not r.saw_cold_start
                 and not r.saw_throttle]
        if not clean:
            clean = [r for r in runs if r.success] or runs
        mean_elat = math.fsum(r.elat_ms for r in clean) / len(clean)
        mean_cost = math.fsum(r.billed_cost for r in clean) / len(clean)
        reliability = sum(1 for r in runs if r.success) / len(runs)
        evaluated.append((policy, {QualityKind.ELAT: mean_elat,
                                   QualityKind.RLAT: mean_elat + overhead,
                                   QualityKind.ECOST: mean_cost,
                                   QualityKind.RELIABILITY: reliability}))

    result = brute_force_match((p for p, _ in evaluated), goal,
                               dict(evaluated).__getitem__, cap=joint_cap)
    result.provenance["method"] = "joint_sampling"
    result.search_stats["runs_per_policy"] = runs_per_policy
    return result
