"""Evaluation harness: accuracy, cost, and time of a configuration method.

Accuracy is the weighted normalized L1 distance between the chosen policy's
ground-truth qualities and the optimal policy's; cost sums the billed cost
of every sampling invocation; time is virtual milliseconds end to end,
attributed per task (sample / model / match). Model fitting and matching are
pure computation and consume no virtual time.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

from .core import (
    GoalSpec,
    InfeasibleError,
    Policy,
    SizerError,
    SystemUnderConfiguration,
    ValidationError,
    canonical_json,
    check_fields,
    enumerate_policies,
    qualities_to_json,
)
from .modeling import ModelStore
from .simulator import GroundTruth, PlatformConfig, SimulatedPlatform
from .sizing import (
    BRUTE_FORCE_CAP,
    RunArtifacts,
    SizingResult,
    brute_force_match,
    class_weights_for,
    run_sizing,
)
from .workload import WorkloadModel

ACCURACY_EPS = 1e-9


@dataclass
class EvaluationReport:
    accuracy: float
    sampling_cost: float
    matching_time: int            # virtual ms end-to-end
    per_task: dict                # {"sample": ms, "model": ms, "match": ms}
    tactic_config: dict
    p_star: Policy
    chosen: Policy
    p_star_qualities: dict = field(default_factory=dict)
    chosen_qualities: dict = field(default_factory=dict)
    platform_invocations: int = 0

    def to_json(self) -> dict:
        return {"accuracy": self.accuracy,
                "sampling_cost": self.sampling_cost,
                "matching_time": self.matching_time,
                "per_task": dict(self.per_task),
                "tactic_config": dict(self.tactic_config),
                "p_star": self.p_star.to_json(),
                "chosen": self.chosen.to_json(),
                "p_star_qualities": qualities_to_json(self.p_star_qualities),
                "chosen_qualities": qualities_to_json(self.chosen_qualities),
                "platform_invocations": self.platform_invocations}


def oracle_predictor(platform: SimulatedPlatform, workload_model: WorkloadModel,
                     known_classes: bool = True):
    """Noise-free whole-composition qualities, averaged over the class mix."""
    weights = class_weights_for(workload_model, known_classes)
    overhead = workload_model.client_overhead_ms

    def predict(policy: Policy) -> dict:
        out = {}
        for cid, w in weights.items():
            qualities = platform.oracle_qualities(policy, cid, overhead)
            for k, v in qualities.items():
                out[k] = out.get(k, 0.0) + w * v
        return out

    return predict


def optimal_policy(suc: SystemUnderConfiguration, goal: GoalSpec,
                   platform: SimulatedPlatform, workload_model: WorkloadModel,
                   *, cap: int = BRUTE_FORCE_CAP):
    """Exhaustive search over ground truth; the reference point p*.

    Returns (policy, oracle qualities). Raises when the space exceeds the
    cap or no policy satisfies the bounds.
    """
    predict = oracle_predictor(platform, workload_model)
    result = brute_force_match(enumerate_policies(suc, cap=cap), goal, predict,
                               cap=cap)
    if result.infeasible:
        raise InfeasibleError("no feasible policy under the goal bounds")
    return result.policy, result.predicted


def accuracy_distance(chosen_qualities: dict, p_star_qualities: dict,
                      goal: GoalSpec) -> float:
    """Weighted normalized L1 distance to the optimum (0 iff equal).

    Uses the goal weights; a bounds-only goal falls back to equal weights
    over the bounded qualities.
    """
    weights = dict(goal.weights)
    if not weights:
        kinds = {b.quality for b in goal.bounds}
        weights = {k: 1.0 / len(kinds) for k in kinds}
    total = 0.0
    for kind, w in weights.items():
        ref = p_star_qualities[kind]
        total += w * abs(chosen_qualities[kind] - ref) / max(ref, ACCURACY_EPS)
    return total


def measure(result: SizingResult, artifacts: RunArtifacts, p_star: Policy,
            goal: GoalSpec, oracle) -> EvaluationReport:
    """Score one finished sizing run against the optimal policy."""
    chosen_q = oracle(result.policy)
    p_star_q = oracle(p_star)
    per_task = {"sample": artifacts.sample_time_ms, "model": 0, "match": 0}
    matching_time = artifacts.finished_at - artifacts.request_started_at
    return EvaluationReport(
        accuracy=accuracy_distance(chosen_q, p_star_q, goal),
        sampling_cost=artifacts.sampling_cost,
        matching_time=matching_time,
        per_task=per_task,
        tactic_config=result.provenance.get("tactics", {}),
        p_star=p_star,
        chosen=result.policy,
        p_star_qualities=p_star_q,
        chosen_qualities=chosen_q,
        platform_invocations=artifacts.platform_invocations)


# ---------------------------------------------------------------------------
# tactic matrix harness

CSV_METRICS = ["status", "accuracy", "sampling_cost_usd", "matching_time_ms",
               "t_sample_ms", "t_model_ms", "t_match_ms"]


def run_tactic_matrix(scenario: dict, store_root, *, seed: int | None = None):
    """Run a cross-product of tactic configs over one scenario.

    The scenario document carries the SUC, platform config, ground truth,
    workload, goal, sampling plan parameters, base tactics, and a `matrix`
    of tactic-flag lists to vary. Returns (rows, csv_text, reports). Combos
    whose tactic config is invalid (e.g. manifold + prune) are reported with
    status "invalid" and not executed. Combos that reuse models run against
    a store pre-warmed by a hidden baseline pass, so their metrics reflect
    the cache-hit path.
    """
    check_fields(scenario, "scenario",
                 ("suc", "platform", "ground_truth", "workload", "goal"),
                 ("plan", "seed", "base_tactics", "matrix"))
    from .experiment import TacticConfig

    suc = SystemUnderConfiguration.from_json(scenario["suc"])
    workload = WorkloadModel.from_json(scenario["workload"])
    goal = GoalSpec.from_json(scenario["goal"])
    ground_truth = GroundTruth.from_json(scenario["ground_truth"])
    plan_cfg = scenario.get("plan", {})
    check_fields(plan_cfg, "scenario plan", (),
                 ("n_sizes", "runs_per_size", "run_block_ms"))
    scenario_seed = scenario.get("seed", 0) if seed is None else seed
    config_json = dict(scenario["platform"])
    config_json["rng_seed"] = scenario_seed
    config = PlatformConfig.from_json(config_json)
    base_tactics = scenario.get("base_tactics", {})
    matrix = scenario.get("matrix", {})

    def fresh_platform():
        return SimulatedPlatform(suc, config, ground_truth)

    p_star, _ = optimal_policy(suc, goal, fresh_platform(), workload)

    flags = sorted(matrix)
    combos = list(itertools.product(*(matrix[f] for f in flags)))
    rows, reports = [], []
    for i, combo in enumerate(combos):
        tactic_json = dict(base_tactics)
        tactic_json.update(dict(zip(flags, combo)))
        row = {f: _cell(v) for f, v in zip(flags, combo)}
        try:
            tactics = TacticConfig.from_json(tactic_json)
            problems = tactics.validate()
            if problems:
                raise ValidationError(problems)
        except SizerError as exc:
            row.update(status=f"invalid: {exc}", accuracy="", sampling_cost_usd="",
                       matching_time_ms="", t_sample_ms="", t_model_ms="",
                       t_match_ms="")
            rows.append(row)
            reports.append({"combo": tactic_json, "status": "invalid",
                            "error": str(exc)})
            continue

        store = ModelStore(f"{store_root}/combo_{i:03d}")
        if tactics.reuse_model:
            _prewarm_store(suc, goal, workload, tactics, store, config,
                           ground_truth, plan_cfg, scenario_seed)
        platform = fresh_platform()
        result, artifacts = run_sizing(
            suc, goal, workload, tactics, platform, store,
            seed=scenario_seed,
            n_sizes=plan_cfg.get("n_sizes", 5),
            runs_per_size=plan_cfg.get("runs_per_size", 20),
            run_block_ms=plan_cfg.get("run_block_ms", 30_000))
        oracle = oracle_predictor(platform, workload)
        report = measure(result, artifacts, p_star, goal, oracle)
        row.update(status="ok",
                   accuracy=f"{report.accuracy:.9g}",
                   sampling_cost_usd=f"{report.sampling_cost:.9g}",
                   matching_time_ms=str(report.matching_time),
                   t_sample_ms=str(report.per_task["sample"]),
                   t_model_ms=str(report.per_task["model"]),
                   t_match_ms=str(report.per_task["match"]))
        rows.append(row)
        reports.append({"combo": tactic_json, "status": "ok",
                        "evaluation": report.to_json(),
                        "sizing": result.to_json()})

    csv_text = _rows_to_csv(flags + CSV_METRICS, rows)
    return rows, csv_text, reports


def _prewarm_store(suc, goal, workload, tactics, store, config, ground_truth,
                   plan_cfg, seed):
    """Build the models a reuse combo will consume (its hidden precondition)."""
    from dataclasses import replace
    baseline = replace(tactics, reuse_model=None, monotonic_prune=None,
                       manifold_testbeds=False)
    platform = SimulatedPlatform(suc, config, ground_truth)
    run_sizing(suc, goal, workload, baseline, platform, store, seed=seed,
               n_sizes=plan_cfg.get("n_sizes", 5),
               runs_per_size=plan_cfg.get("runs_per_size", 20),
               run_block_ms=plan_cfg.get("run_block_ms", 30_000))


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, dict):
        return canonical_json(value).strip().replace("\n", " ")
    return str(value)


def _rows_to_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row.get(c, "") for c in columns})
    return buf.getvalue()
