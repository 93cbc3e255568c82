"""Sampling a function at max-spacing sizes and fitting its latency model.

Run with: python3 demos/02_sample_and_fit.py
The fitted curve is written to demos/out/fit.png when matplotlib is present.
"""

import math
from pathlib import Path

import faas_sizer as fs
from faas_sizer import QualityKind as Q

DOMAIN = tuple(range(128, 2049))
TRUTH = (1000.0, 0.002, 200.0)

suc = fs.SystemUnderConfiguration(
    functions=[fs.FunctionSpec("thumbs", [fs.KnobSpec(fs.KnobKind.MEMORY,
                                                      DOMAIN)])],
    composition=fs.CompositionSpec(fs.FunctionRef("thumbs")))
truth = fs.uniform_ground_truth(suc, ["w"], a=TRUTH[0], b=TRUTH[1], c=TRUTH[2],
                                noise_sigma=0.05,
                                cold_start_extra=(600.0, 0.001, 150.0))
platform = fs.SimulatedPlatform(
    suc, fs.PlatformConfig(deployment_convergence=(3000, 3000),
                           price_per_gb_second=0.0000166667, rng_seed=3),
    truth)
workload = fs.WorkloadModel([fs.WorkloadClass("w", 1.0)], target_rate=2.0)

sizes = fs.plan_max_spacing(DOMAIN, 5)
print(f"max-spacing sizes over {DOMAIN[0]}..{DOMAIN[-1]} MB: {sizes}")

plan = fs.SamplingPlan("thumbs", sizes, runs_per_size=20,
                       workload_classes=("w",))
report = fs.execute_plan(plan, fs.TacticConfig(), platform, workload)
valid = [s for s in report.samples if s.valid]
dropped = [s for s in report.samples if not s.valid]
print(f"sampled {len(report.samples)} runs in {report.elapsed_ms / 1000:.0f} "
      f"virtual s for {report.billed_cost * 1e3:.3f} milli-USD "
      f"({len(dropped)} invalidated: "
      f"{sorted({s.invalid_reason for s in dropped})})")

pairs = [(s.telemetry.memory_size, s.qualities[Q.ELAT]) for s in valid]
params, diagnostics, flags = fs.fit_exponential_decay(pairs)
print(f"fitted a={params[0]:.1f} ms, b={params[1]:.5f} /MB, c={params[2]:.1f} ms"
      f"  (truth {TRUTH[0]:.0f}, {TRUTH[1]}, {TRUTH[2]:.0f}; "
      f"rmse {diagnostics.rmse:.1f} ms)")

worst = max(abs(params[0] * math.exp(-params[1] * m) + params[2]
                - (TRUTH[0] * math.exp(-TRUTH[1] * m) + TRUTH[2]))
            / (TRUTH[0] * math.exp(-TRUTH[1] * m) + TRUTH[2])
            for m in DOMAIN)
print(f"worst prediction error across the domain: {worst * 100:.2f}%")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not installed; skipping the plot")
else:
    out = Path(__file__).parent / "out"
    out.mkdir(exist_ok=True)
    grid = list(range(DOMAIN[0], DOMAIN[-1] + 1, 8))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.scatter([m for m, _ in pairs], [y for _, y in pairs], s=12, alpha=0.5,
               label="samples")
    ax.plot(grid, [params[0] * math.exp(-params[1] * m) + params[2]
                   for m in grid], "r-", label="fit")
    ax.plot(grid, [TRUTH[0] * math.exp(-TRUTH[1] * m) + TRUTH[2]
                   for m in grid], "k--", label="ground truth")
    ax.set_xlabel("memory size (MB)")
    ax.set_ylabel("execution latency (ms)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "fit.png", dpi=120)
    print(f"wrote {out / 'fit.png'}")
