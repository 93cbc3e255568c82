"""Goal-driven sizing of a three-function composition.

A request carries absolute bounds plus relative weights; the sizer samples
each function in isolation, fits models, and searches the joint size space.

Run with: python3 demos/03_goal_driven_sizing.py
"""

import tempfile

import faas_sizer as fs
from faas_sizer import QualityKind as Q

DOMAIN = (128, 256, 512, 1024, 2048)

functions = [fs.FunctionSpec(name, [fs.KnobSpec(fs.KnobKind.MEMORY, DOMAIN)])
             for name in ("extract", "transform", "load")]
# extract, then transform and load fan out in parallel
composition = fs.CompositionSpec(fs.Sequence((
    fs.FunctionRef("extract"),
    fs.Parallel((fs.FunctionRef("transform"), fs.FunctionRef("load"))),
)))
suc = fs.SystemUnderConfiguration(functions, composition, name="etl")

truth = fs.GroundTruth({
    (fn, "batch"): fs.GroundTruthEntry(a, 0.002, c, noise_sigma=0.04)
    for fn, a, c in (("extract", 2000.0, 150.0), ("transform", 1500.0, 300.0),
                     ("load", 800.0, 100.0))})
platform = fs.SimulatedPlatform(
    suc, fs.PlatformConfig(deployment_convergence=(2000, 6000),
                           price_per_gb_second=0.0000166667, rng_seed=11),
    truth)
workload = fs.WorkloadModel([fs.WorkloadClass("batch", 1.0)], target_rate=1.0)

goal = fs.GoalSpec(
    bounds=[fs.Bound(Q.RLAT, "<=", 2500.0)],
    weights={Q.ELAT: 0.4, Q.ECOST: 0.6})
print("goal: RLat<=2500ms, weights ELat 0.4 / ECost 0.6")

with tempfile.TemporaryDirectory() as model_dir:
    result, artifacts = fs.run_sizing(
        suc, goal, workload, fs.TacticConfig(), platform,
        fs.ModelStore(model_dir), seed=5, n_sizes=4, runs_per_size=10)

print(f"\nchosen sizes: "
      f"{ {fn: result.policy.memory_of(fn) for fn in suc.function_names} }")
print(f"predicted: RLat {result.predicted[Q.RLAT]:.0f} ms, "
      f"ECost {result.predicted[Q.ECOST] * 1e6:.2f} micro-USD, "
      f"reliability {result.predicted[Q.RELIABILITY]:.3f}")
print(f"score {result.zf_score:.4f} via {result.provenance['method']}, "
      f"{result.search_stats['evaluations']} evaluations")
print(f"sampling: {artifacts.sampling_cost * 1e3:.3f} milli-USD over "
      f"{artifacts.sample_time_ms / 1000:.0f} virtual s")

print("\nlatency/cost front (best score first):")
for policy, predicted, zf in result.pareto_front[:8]:
    sizes = [policy.memory_of(fn) for fn in suc.function_names]
    print(f"  {str(sizes):22} RLat {predicted[Q.RLAT]:7.0f} ms  "
          f"ECost {predicted[Q.ECOST] * 1e6:7.2f} micro-USD  zf {zf:.4f}")

# the exhaustive oracle agrees on this small space
p_star, p_star_q = fs.optimal_policy(suc, goal, platform, workload)
report = fs.measure(result, artifacts, p_star, goal,
                    lambda p: platform.oracle_qualities(p, "batch"))
print(f"\nground-truth optimum: "
      f"{ {fn: p_star.memory_of(fn) for fn in suc.function_names} } "
      f"-> accuracy distance {report.accuracy:.4f}")
