"""Accuracy / cost / time tradeoffs of the run-reducing tactics.

Runs the evaluation harness over a cross-product of tactic toggles and
prints the resulting matrix: manifold testbeds cut sampling time without
raising cost, isolation halves the number of runs, and the combination
stacks.

Run with: python3 demos/04_tactic_tradeoffs.py
"""

import tempfile

import faas_sizer as fs

DOMAIN = (128, 256, 512, 1024)

suc = fs.SystemUnderConfiguration(
    [fs.FunctionSpec(n, [fs.KnobSpec(fs.KnobKind.MEMORY, DOMAIN)])
     for n in ("parse", "render")],
    fs.CompositionSpec(fs.Sequence((fs.FunctionRef("parse"),
                                    fs.FunctionRef("render")))),
    name="reports")

scenario = {
    "suc": suc.to_json(),
    "platform": {"deployment_convergence": [2000, 2000],
                 "price_per_gb_second": 0.0000166667},
    "ground_truth": {"entries": [
        {"function": fn, "workload_class": "w", "a": 1000.0, "b": 0.002,
         "c": 200.0, "noise_sigma": 0.03} for fn in suc.function_names]},
    "workload": {"classes": [{"id": "w", "relative_frequency": 1.0}],
                 "target_rate": 2.0},
    "goal": {"bounds": [{"quality": "ELat", "operator": "<=",
                         "threshold": 2000.0}],
             "weights": {"ELat": 0.5, "ECost": 0.5}},
    "plan": {"n_sizes": 4, "runs_per_size": 12},
    "seed": 17,
    "matrix": {"manifold_testbeds": [False, True],
               "isolate_executions": [False, True]},
}

with tempfile.TemporaryDirectory() as stores:
    rows, csv_text, _ = fs.run_tactic_matrix(scenario, stores)

print(csv_text)
print("reading the matrix:")
for row in rows:
    label = []
    if row["manifold_testbeds"] == "true":
        label.append("manifold")
    if row["isolate_executions"] == "true":
        label.append("isolated")
    name = "+".join(label) or "baseline"
    print(f"  {name:20} accuracy {row['accuracy']:>6}  "
          f"cost {float(row['sampling_cost_usd']) * 1e3:7.3f} milli-USD  "
          f"sample time {int(row['t_sample_ms']) / 1000:6.0f} s")
