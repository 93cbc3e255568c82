"""Tour of the simulated FaaS platform: deploys, cold starts, billing.

Run with: python3 demos/01_platform_basics.py
"""

import faas_sizer as fs

# a single function whose execution latency decays with memory size
suc = fs.SystemUnderConfiguration(
    functions=[fs.FunctionSpec("resize", [fs.KnobSpec(fs.KnobKind.MEMORY,
                                                      range(128, 3073, 64))])],
    composition=fs.CompositionSpec(fs.FunctionRef("resize")),
    name="image-service")

truth = fs.uniform_ground_truth(suc, ["photos"], a=1200.0, b=0.003, c=180.0,
                                noise_sigma=0.05,
                                cold_start_extra=(900.0, 0.001, 250.0))
config = fs.PlatformConfig(deployment_convergence=(2000, 8000),
                           price_per_gb_second=0.0000166667,
                           price_per_invocation=2e-7, rng_seed=7)
platform = fs.SimulatedPlatform(suc, config, truth)

policy = fs.uniform_policy(suc, memory_mb=1024)
deployment = platform.deploy(policy)
print(f"deployed {deployment.id} at t={deployment.created_at} ms, "
      f"converges at t={deployment.converged_at} ms")

event = fs.Event("photos", "2.1MB jpeg")
t = deployment.converged_at
for i in range(5):
    result, telemetry = platform.invoke(deployment.id, "resize", event, t)
    tag = "cold" if telemetry.cold_start else "warm"
    print(f"  run {i}: {result.elat_ms:8.1f} ms ({tag}), "
          f"billed {telemetry.billed_duration} ms -> "
          f"{telemetry.billed_cost * 1e6:.3f} micro-USD")
    t += 15_000

# memory size drives the latency/cost tradeoff
print("\nwarm latency and per-run cost by memory size:")
for memory in (128, 256, 512, 1024, 2048):
    qualities = platform.oracle_qualities(fs.uniform_policy(suc, memory),
                                          "photos")
    print(f"  {memory:5d} MB: {qualities[fs.QualityKind.ELAT]:8.1f} ms, "
          f"{qualities[fs.QualityKind.ECOST] * 1e6:8.3f} micro-USD")

print(f"\ntelemetry stream: {len(platform.telemetry)} records, "
      f"total billed {platform.total_billed_cost() * 1e6:.3f} micro-USD")
