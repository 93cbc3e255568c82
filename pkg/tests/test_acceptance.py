"""Acceptance gate: one test per release criterion.

Each test prints one "ACCEPTANCE <name>: PASS/FAIL" line and enforces the
criterion's tolerance and runtime budget.
"""

import json
import math
import time
from contextlib import contextmanager
from random import Random

import pytest

import faas_sizer as fs
from faas_sizer import (
    Bound,
    CompositionSpec,
    Event,
    FunctionRef,
    FunctionSpec,
    GoalSpec,
    GroundTruth,
    GroundTruthEntry,
    KnobKind,
    KnobSpec,
    ModelStore,
    Parallel,
    PlanMode,
    Policy,
    QualityKind,
    SamplingPlan,
    Sequence,
    Switch,
    SystemUnderConfiguration,
    TacticConfig,
    ThrottleAbortError,
    WorkloadClass,
    WorkloadModel,
    config_space_size,
    execute_plan,
    monotonic_prune_sweep,
    run_sizing,
    zf_score,
)
from faas_sizer.cli import main as cli_main
from faas_sizer.evaluation import measure, optimal_policy, oracle_predictor
from faas_sizer.modeling import CostParams, FitDiagnostics, QualityModel
from faas_sizer.sizing import (
    AnnealSchedule,
    aggregate_composition,
    analytic_normalizers,
    anneal_match,
    brute_force_match,
    build_quality_tables,
    choose_from_sweep,
)
from faas_sizer.workload import run_composition

from conftest import chain_suc, make_platform, single_suc
from test_cli import write_fixtures

E, R, C, REL = (QualityKind.ELAT, QualityKind.RLAT, QualityKind.ECOST,
                QualityKind.RELIABILITY)


@contextmanager
def criterion(name: str, budget_s: float | None = None):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {name}: FAIL")
        raise
    elapsed = time.monotonic() - start
    if budget_s is not None:
        assert elapsed < budget_s, f"{name} took {elapsed:.1f}s >= {budget_s}s"
    print(f"\nACCEPTANCE {name}: PASS ({elapsed:.2f}s)")


def workload_w(overhead=0.0):
    return WorkloadModel((WorkloadClass("w", 1.0, "p"),), target_rate=2.0,
                         client_overhead_ms=overhead)


def test_zf_hand_check():
    with criterion("zf-hand-check", budget_s=1.0):
        requests = [{E: 100.0, C: 0.1}, {E: 200.0, C: 0.2}]
        score = zf_score(requests, {E: 0.5, C: 0.5})
        assert abs(score - 0.75) <= 1e-12
        single = zf_score([{E: 321.0, C: 0.07}], {E: 0.5, C: 0.5})
        assert abs(single - 1.0) <= 1e-12


def test_fit_recovery():
    with criterion("fit-recovery", budget_s=30.0):
        truth = (1000.0, 0.002, 200.0)
        domain = tuple(range(128, 2049))
        suc = single_suc(domain)
        sizes = fs.plan_max_spacing(domain, 5)
        ground = lambda m: truth[0] * math.exp(-truth[1] * m) + truth[2]

        # noiseless: all three parameters within 1% relative error
        params, _, _ = fs.fit_exponential_decay([(m, ground(m)) for m in sizes])
        for got, expected in zip(params, truth):
            assert abs(got - expected) / expected < 0.01

        # sigma = 0.05, 20 runs/size, through the sampling pipeline:
        # predictions within 10% of ground truth across the full domain
        # in at least 95% of 50 seeds
        plan = SamplingPlan("f1", sizes, 20, ("w",))
        passes = 0
        for seed in range(50):
            platform = make_platform(suc, noise_sigma=0.05, seed=seed,
                                     convergence=(1000, 1000))
            report = execute_plan(plan, TacticConfig(), platform, workload_w())
            pairs = [(s.telemetry.memory_size, s.qualities[E])
                     for s in report.samples if s.valid]
            fit, _, _ = fs.fit_exponential_decay(pairs)
            predicted = lambda m: fit[0] * math.exp(-fit[1] * m) + fit[2]
            worst = max(abs(predicted(m) - ground(m)) / ground(m)
                        for m in domain)
            passes += worst <= 0.10
        assert passes >= 48, f"only {passes}/50 seeds within 10%"


ORACLE_EQ_GOAL = GoalSpec(bounds=(Bound(E, "<=", 2200.0),),
                          weights={E: 0.3, C: 0.7})


def _exact_tables(suc):
    models = {(fn, "w"): QualityModel(fn, "w", (1000.0, 0.002, 200.0),
                                      FitDiagnostics(0.0, 5, ()),
                                      CostParams(0.2))
              for fn in suc.function_names}
    return build_quality_tables(suc, models, {"w": 1.0})


def test_oracle_equivalence():
    with criterion("oracle-equivalence", budget_s=60.0):
        suc = chain_suc(3)  # 4^3 = 64 policies
        tables = _exact_tables(suc)
        normalizers = analytic_normalizers(suc, tables, (E, C))
        index = {fn: {s: i for i, s in enumerate(t.sizes)}
                 for fn, t in tables.items()}

        def predict(policy):
            per_fn = {fn: tables[fn].qualities[index[fn][policy.memory_of(fn)]]
                      for fn in tables}
            agg = aggregate_composition(suc.composition.root, per_fn)
            agg[R] = agg[E]
            return agg

        oracle = brute_force_match(fs.enumerate_policies(suc), ORACLE_EQ_GOAL,
                                   predict, normalizers=normalizers)
        schedule = AnnealSchedule(steps_per_temp=60)
        hits = 0
        for seed in range(100):
            result = anneal_match(suc, ORACLE_EQ_GOAL, tables, schedule,
                                  seed=seed, normalizers=normalizers)
            hits += abs(result.zf_score - oracle.zf_score) <= 1e-9
        assert hits >= 95, f"only {hits}/100 trials matched the oracle"


DAG_DOMAIN = (128, 256, 512, 1024)


def _random_node(rng: Random, names, depth):
    if depth >= 4 or rng.random() < 0.35:
        return FunctionRef(rng.choice(names))
    kind = rng.choice(("seq", "par", "switch"))
    children = [_random_node(rng, names, depth + 1)
                for _ in range(rng.randint(2, 3))]
    if kind == "seq":
        return Sequence(tuple(children))
    if kind == "par":
        return Parallel(tuple(children))
    raw = [rng.uniform(0.3, 1.0) for _ in children]
    total = sum(raw)
    probs = [w / total for w in raw]
    probs[-1] = 1.0 - math.fsum(probs[:-1])
    return Switch(tuple(zip(probs, children)))


def _random_suc(seed: int):
    rng = Random(seed)
    names = [f"f{i + 1}" for i in range(rng.randint(2, 4))]
    functions = tuple(FunctionSpec(n, [KnobSpec(KnobKind.MEMORY, DAG_DOMAIN)])
                      for n in names)
    suc = SystemUnderConfiguration(
        functions, CompositionSpec(_random_node(rng, names, 1)))
    policy = Policy({fn: {"Memory": rng.choice(DAG_DOMAIN)}
                     for fn in suc.function_names})
    return suc, policy


def test_aggregation_exactness():
    with criterion("aggregation-exactness"):
        for seed in range(200):
            suc, policy = _random_suc(seed)
            platform = make_platform(suc)
            per_fn = {fn: platform.oracle_function_qualities(
                fn, policy.memory_of(fn), "w") for fn in suc.function_names}
            assert aggregate_composition(suc.composition.root, per_fn) == \
                platform.oracle_qualities(policy, "w")

        # empirical: 100 end-to-end runs per DAG at sigma = 0.05
        for seed in range(10):
            suc, policy = _random_suc(seed)
            platform = make_platform(suc, noise_sigma=0.05, seed=seed,
                                     max_concurrent=1000)
            expected = platform.oracle_qualities(policy, "w")[E]
            deployment = platform.deploy(policy)
            t = deployment.converged_at
            elats = []
            for i in range(100):
                run = run_composition(platform, deployment, Event("w"),
                                      int(math.ceil(t)), seed=seed, run_index=i)
                if run.success and not run.saw_cold_start:
                    elats.append(run.elat_ms)
                t = max(t + 1, run.finished_at)
            mean = math.fsum(elats) / len(elats)
            assert abs(mean - expected) / expected <= 0.05, \
                f"seed {seed}: empirical {mean:.1f} vs aggregate {expected:.1f}"


SWEEP_DOMAIN = (128, 256, 512, 1024, 2048)
SWEEP_BOUND = Bound(E, "<=", 1300.0)
SWEEP_GOAL = GoalSpec(bounds=(SWEEP_BOUND,), weights={E: 1.0})


def _sweep_platform(seed):
    suc = single_suc(SWEEP_DOMAIN)
    truth = GroundTruth({("f1", "w"): GroundTruthEntry(
        3000.0, 0.002, 150.0, noise_sigma=0.05)})
    return make_platform(suc, ground_truth=truth, seed=seed,
                         convergence=(5000, 5000))


def test_tactic_t5_monotonic_prune():
    with criterion("tactic-T5-monotonic-prune"):
        plan = SamplingPlan("f1", SWEEP_DOMAIN, 10, ("w",))
        for seed in range(50):
            pruned = monotonic_prune_sweep(plan, SWEEP_BOUND, TacticConfig(),
                                           _sweep_platform(seed), workload_w())
            full = execute_plan(plan, TacticConfig(), _sweep_platform(seed),
                                workload_w())
            assert len(pruned.omitted_sizes) >= 1
            chosen_pruned, _ = choose_from_sweep(pruned, SWEEP_GOAL)
            chosen_full, _ = choose_from_sweep(full, SWEEP_GOAL)
            assert chosen_pruned == chosen_full


def test_tactic_t3_manifold():
    with criterion("tactic-T3-manifold"):
        plan_seq = SamplingPlan("f1", SWEEP_DOMAIN, 10, ("w",))
        plan_man = SamplingPlan("f1", SWEEP_DOMAIN, 10, ("w",),
                                PlanMode.MANIFOLD)
        sequential = execute_plan(plan_seq, TacticConfig(),
                                  _sweep_platform(0), workload_w())
        manifold = execute_plan(plan_man, TacticConfig(manifold_testbeds=True),
                                _sweep_platform(0), workload_w())
        assert abs(manifold.billed_cost - sequential.billed_cost) <= 1e-9
        assert manifold.elapsed_ms / sequential.elapsed_ms <= 0.25

        suc = single_suc(SWEEP_DOMAIN)
        truth = GroundTruth({("f1", "w"): GroundTruthEntry(3000.0, 0.002, 150.0)})
        throttled = make_platform(suc, ground_truth=truth,
                                  convergence=(5000, 5000), max_concurrent=1)
        with pytest.raises(ThrottleAbortError,
                           match="manifold exceeded concurrency limit"):
            execute_plan(plan_man, TacticConfig(manifold_testbeds=True),
                         throttled, workload_w())


def test_tactic_t7_model_reuse(tmp_path):
    with criterion("tactic-T7-model-reuse"):
        suc = chain_suc(2)
        goal = GoalSpec(weights={E: 0.5, C: 0.5})
        store = ModelStore(tmp_path / "models")

        warm_platform = make_platform(suc, noise_sigma=0.02, seed=4,
                                      convergence=(1000, 1000))
        run_sizing(suc, goal, workload_w(), TacticConfig(), warm_platform,
                   store, seed=4, n_sizes=3, runs_per_size=5)

        platform = make_platform(suc, noise_sigma=0.02, seed=4,
                                 convergence=(1000, 1000))
        result, artifacts = run_sizing(suc, goal, workload_w(),
                                       TacticConfig(reuse_model=True),
                                       platform, store, seed=4, n_sizes=3,
                                       runs_per_size=5)
        assert artifacts.platform_invocations == 0
        p_star, _ = optimal_policy(suc, goal, platform, workload_w())
        report = measure(result, artifacts, p_star, goal,
                         oracle_predictor(platform, workload_w()))
        assert report.sampling_cost == 0.0
        assert report.per_task["sample"] == 0


def test_config_space_count():
    with criterion("config-space-count"):
        domain = tuple(range(128, 10240))  # 10112 values
        assert len(domain) == 10112
        suc = chain_suc(3, domain)
        assert config_space_size(suc) == 10112**3
        assert config_space_size(suc) == 1_033_977_724_928


def test_cli_determinism(tmp_path):
    with criterion("cli-determinism"):
        fixtures = write_fixtures(tmp_path)

        def run_size(tag):
            out = tmp_path / f"size_{tag}.json"
            code = cli_main(["size", "--suc", fixtures["suc"], "--goal",
                             fixtures["goal"], "--workload",
                             fixtures["workload"], "--tactics",
                             fixtures["tactics"], "--platform",
                             fixtures["platform"], "--ground-truth",
                             fixtures["ground_truth"], "--seed", "11",
                             "--model-dir", str(tmp_path / f"models_{tag}"),
                             "--out", str(out), "--runs-per-size", "5",
                             "--n-sizes", "3"])
            assert code == 0
            return out.read_bytes()

        def run_experiment(tag):
            out = tmp_path / f"report_{tag}.json"
            code = cli_main(["experiment", "run", "--suc", fixtures["suc"],
                             "--platform", fixtures["platform"],
                             "--ground-truth", fixtures["ground_truth"],
                             "--workload", fixtures["workload"], "--plan",
                             fixtures["plan"], "--tactics",
                             fixtures["tactics"], "--seed", "11",
                             "--out", str(out)])
            assert code == 0
            return out.read_bytes()

        def run_eval(tag):
            scenario = {
                "suc": json.loads((tmp_path / "suc.json").read_text()),
                "platform": json.loads((tmp_path / "platform.json").read_text()),
                "ground_truth": json.loads(
                    (tmp_path / "ground_truth.json").read_text()),
                "workload": json.loads((tmp_path / "workload.json").read_text()),
                "goal": json.loads((tmp_path / "goal.json").read_text()),
                "plan": {"n_sizes": 3, "runs_per_size": 4},
                "seed": 11,
                "matrix": {"manifold_testbeds": [False, True]},
            }
            matrix_file = tmp_path / f"matrix_{tag}.json"
            matrix_file.write_text(json.dumps(scenario), encoding="utf-8")
            out_dir = tmp_path / f"eval_{tag}"
            code = cli_main(["eval", "tactics", "--matrix", str(matrix_file),
                             "--out", str(out_dir)])
            assert code == 0
            return ((out_dir / "matrix.csv").read_bytes(),
                    (out_dir / "reports.json").read_bytes())

        assert run_size("a") == run_size("b")
        assert run_experiment("a") == run_experiment("b")
        assert run_eval("a") == run_eval("b")


def test_bound_semantics():
    with criterion("bound-semantics"):
        # RLat <= 900 ms keeps exactly the candidates at or under 900
        rlat_bound = Bound(R, "<=", 900.0)
        fixture = [(Policy({"f": {"Memory": m}}), {R: v})
                   for m, v in ((128, 1400.0), (256, 901.0), (512, 900.0),
                                (1024, 800.0))]
        kept = fs.filter_bounds(fixture, (rlat_bound,))
        assert [p.memory_of("f") for p, _ in kept] == [512, 1024]

        # latency below 90 s and cost below 0.1 USD, applied jointly
        joint = (Bound(R, "<=", 90_000.0), Bound(C, "<=", 0.1))
        candidates = [
            (Policy({"f": {"Memory": 128}}), {R: 120_000.0, C: 0.04}),
            (Policy({"f": {"Memory": 256}}), {R: 89_000.0, C: 0.11}),
            (Policy({"f": {"Memory": 512}}), {R: 70_000.0, C: 0.09}),
            (Policy({"f": {"Memory": 1024}}), {R: 50_000.0, C: 0.2}),
        ]
        kept = fs.filter_bounds(candidates, joint)
        assert [p.memory_of("f") for p, _ in kept] == [512]
