"""Command-line entry point over the JSON artifact files.

Verbs: suc validate, experiment run, model fit, model show, size,
eval tactics, serve. Exit codes: 0 success, 2 validation error,
3 infeasible goal, 4 platform/limit error, 64 usage error. Every artifact
is canonical JSON, so identical inputs and seed give byte-identical files.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .core import (
    CapExceededError,
    GoalSpec,
    InfeasibleError,
    PlatformError,
    SchemaError,
    SizerError,
    SystemUnderConfiguration,
    ValidationError,
    canonical_json,
    load_json_file,
    validate_goal,
)
from .evaluation import run_tactic_matrix
from .experiment import SamplingPlan, TacticConfig, ThrottleAbortError, execute_plan
from .modeling import (
    ConcurrentWriteError,
    CostParams,
    ModelKey,
    ModelStore,
    build_model_from_samples,
)
from .simulator import GroundTruth, PlatformConfig, SimulatedPlatform
from .sizing import run_sizing
from .workload import WorkloadModel

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_PLATFORM = 4
EXIT_USAGE = 64

MODEL_DIR_ENV = "SIZER_MODEL_DIR"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _write_artifact(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(canonical_json(obj), encoding="utf-8")


def _emit(obj: dict, fmt: str) -> None:
    if fmt == "json":
        sys.stdout.write(canonical_json(obj))
    else:
        for key, value in obj.items():
            sys.stdout.write(f"{key:24} {value}\n")


def _load_platform(args) -> PlatformConfig:
    config = PlatformConfig.from_json(load_json_file(args.platform)) \
        if getattr(args, "platform", None) else PlatformConfig()
    if getattr(args, "seed", None) is not None:
        config = PlatformConfig.from_json({**config.to_json(),
                                           "rng_seed": args.seed})
    return config


def _build_simulator(args) -> tuple:
    suc = SystemUnderConfiguration.from_json(load_json_file(args.suc))
    config = _load_platform(args)
    ground_truth = GroundTruth.from_json(load_json_file(args.ground_truth))
    return suc, config, SimulatedPlatform(suc, config, ground_truth)


def _model_dir(args) -> str:
    return (getattr(args, "model_dir", None)
            or os.environ.get(MODEL_DIR_ENV)
            or "models")


# ---------------------------------------------------------------------------
# verbs

def _cmd_suc_validate(args) -> int:
    problems = []
    try:
        SystemUnderConfiguration.from_json(load_json_file(args.suc))
    except (SchemaError, ValidationError) as exc:
        problems += getattr(exc, "violations", [str(exc)])
    if args.goal:
        goal = GoalSpec.from_json(load_json_file(args.goal))
        problems += list(validate_goal(goal).violations)
    _emit({"ok": not problems, "violations": problems}, args.format)
    return EXIT_OK if not problems else EXIT_VALIDATION


def _cmd_experiment_run(args) -> int:
    suc, config, platform = _build_simulator(args)
    plan = SamplingPlan.from_json(load_json_file(args.plan))
    tactics = TacticConfig.from_json(load_json_file(args.tactics))
    workload = WorkloadModel.from_json(load_json_file(args.workload))
    if tactics.monotonic_prune is not None:
        from .experiment import monotonic_prune_sweep
        report = monotonic_prune_sweep(plan, tactics.monotonic_prune, tactics,
                                       platform, workload)
    else:
        report = execute_plan(plan, tactics, platform, workload)
    if args.out:
        _write_artifact(args.out, report.to_json())
    if args.telemetry_out:
        Path(args.telemetry_out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.telemetry_out).write_text(platform.telemetry_jsonl(),
                                            encoding="utf-8")
    _emit({"samples": len(report.samples),
           "omitted_sizes": report.omitted_sizes,
           "elapsed_ms": report.elapsed_ms,
           "billed_cost": report.billed_cost,
           "throttled": report.throttle_stats["throttled"],
           "out": args.out or ""}, args.format)
    return EXIT_OK


def _cmd_model_fit(args) -> int:
    from .core import Sample
    doc = load_json_file(args.samples)
    if "samples" not in doc:
        raise SchemaError("samples file carries no 'samples' array")
    samples = [Sample.from_json(s) for s in doc["samples"]]
    selected = [s for s in samples if s.workload_class == args.workload_class
                and args.function in s.policy.assignments]
    if not selected:
        raise ValidationError(
            f"no samples for function {args.function!r} and class "
            f"{args.workload_class!r}")
    config = _load_platform(args)
    cost = CostParams(config.price_per_gb_second, config.price_per_invocation,
                      config.billing_quantum)
    suc_hash = "adhoc"
    if args.suc:
        suc_hash = SystemUnderConfiguration.from_json(
            load_json_file(args.suc)).content_hash()
    model = build_model_from_samples(args.function, args.workload_class,
                                     selected, cost)
    store = ModelStore(args.out)
    key = ModelKey(suc_hash, args.function, args.workload_class)
    path = store.save(key, model)
    a, b, c = model.latency_params
    _emit({"key": str(key), "a": a, "b": b, "c": c,
           "rmse": model.fit_diagnostics.rmse,
           "n_samples": model.fit_diagnostics.n_samples,
           "flags": ",".join(model.flags), "path": str(path)}, args.format)
    return EXIT_OK


def _cmd_model_show(args) -> int:
    store = ModelStore(_model_dir(args))
    key = ModelKey.parse(args.key)
    model = store.load(key)
    if model is None:
        raise ValidationError(f"no model stored under {key}")
    _emit(model.to_json() if args.format == "json"
          else {"key": str(key), **_flatten(model.to_json())}, args.format)
    return EXIT_OK


def _flatten(obj, prefix=""):
    flat = {}
    for k, v in obj.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, name + "."))
        else:
            flat[name] = v
    return flat


def _cmd_size(args) -> int:
    suc, config, platform = _build_simulator(args)
    goal = GoalSpec.from_json(load_json_file(args.goal))
    workload = WorkloadModel.from_json(load_json_file(args.workload))
    tactics = TacticConfig.from_json(load_json_file(args.tactics))
    store = ModelStore(_model_dir(args))
    result, artifacts = run_sizing(
        suc, goal, workload, tactics, platform, store,
        seed=args.seed if args.seed is not None else config.rng_seed,
        n_sizes=args.n_sizes, runs_per_size=args.runs_per_size,
        method=args.method, apply=args.apply)
    if args.out:
        _write_artifact(args.out, result.to_json())
    _emit({"policy": {fn: result.policy.memory_of(fn)
                      for fn in suc.function_names},
           "zf_score": result.zf_score,
           "infeasible": result.infeasible,
           "sampling_cost": artifacts.sampling_cost,
           "sample_time_ms": artifacts.sample_time_ms,
           "out": args.out or ""}, args.format)
    return EXIT_INFEASIBLE if result.infeasible else EXIT_OK


def _cmd_eval_tactics(args) -> int:
    scenario = load_json_file(args.matrix)
    if args.seed is not None:
        scenario = {**scenario, "seed": args.seed}
    out_dir = Path(args.out)
    rows, csv_text, reports = run_tactic_matrix(scenario, out_dir / "stores")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "matrix.csv").write_text(csv_text, encoding="utf-8")
    _write_artifact(out_dir / "reports.json", reports)
    _emit({"rows": len(rows), "csv": str(out_dir / "matrix.csv"),
           "reports": str(out_dir / "reports.json")}, args.format)
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import build_service
    suc, config, platform = _build_simulator(args)
    workload = WorkloadModel.from_json(load_json_file(args.workload))
    service = build_service(
        suc=suc, platform_config=config,
        ground_truth=platform.ground_truth, workload=workload,
        model_dir=_model_dir(args), artifact_dir=args.artifact_dir,
        seed=args.seed if args.seed is not None else config.rng_seed)
    service.write_openapi(Path(args.docs_dir) / "openapi.json")
    uvicorn.run(service.app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _add_common(p, *, seed=True, fmt=True):
    if seed:
        p.add_argument("--seed", type=int, default=None,
                       help="override every stochastic component's seed")
    if fmt:
        p.add_argument("--format", choices=("json", "table"), default="table")


def build_parser() -> _Parser:
    parser = _Parser(prog="sizer", description=__doc__)
    verbs = parser.add_subparsers(dest="verb", required=True)

    suc = verbs.add_parser("suc").add_subparsers(dest="subverb", required=True)
    p = suc.add_parser("validate")
    p.add_argument("--suc", required=True)
    p.add_argument("--goal")
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_suc_validate)

    exp = verbs.add_parser("experiment").add_subparsers(dest="subverb",
                                                        required=True)
    p = exp.add_parser("run")
    for flag in ("--suc", "--platform", "--ground-truth", "--workload",
                 "--plan", "--tactics"):
        p.add_argument(flag, required=True)
    p.add_argument("--out")
    p.add_argument("--telemetry-out",
                   help="write the platform telemetry stream as JSON lines")
    _add_common(p)
    p.set_defaults(func=_cmd_experiment_run)

    model = verbs.add_parser("model").add_subparsers(dest="subverb",
                                                     required=True)
    p = model.add_parser("fit")
    p.add_argument("--samples", required=True)
    p.add_argument("--function", required=True)
    p.add_argument("--workload-class", required=True)
    p.add_argument("--suc")
    p.add_argument("--platform")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_model_fit)
    p = model.add_parser("show")
    p.add_argument("key")
    p.add_argument("--model-dir")
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_model_show)

    p = verbs.add_parser("size")
    for flag in ("--suc", "--goal", "--workload", "--tactics", "--platform",
                 "--ground-truth"):
        p.add_argument(flag, required=True)
    p.add_argument("--apply", action="store_true")
    p.add_argument("--out")
    p.add_argument("--model-dir")
    p.add_argument("--method", choices=("auto", "brute_force", "anneal"),
                   default="auto")
    p.add_argument("--n-sizes", type=int, default=5)
    p.add_argument("--runs-per-size", type=int, default=20)
    _add_common(p)
    p.set_defaults(func=_cmd_size)

    ev = verbs.add_parser("eval").add_subparsers(dest="subverb", required=True)
    p = ev.add_parser("tactics")
    p.add_argument("--matrix", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_eval_tactics)

    p = verbs.add_parser("serve")
    for flag in ("--suc", "--platform", "--ground-truth", "--workload"):
        p.add_argument(flag, required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--model-dir")
    p.add_argument("--artifact-dir", default="artifacts")
    p.add_argument("--docs-dir", default="docs")
    _add_common(p, fmt=False)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(str(exc))
        return EXIT_USAGE
    try:
        return args.func(args)
    except (SchemaError, ValidationError) as exc:
        _emit({"error": "validation",
               "violations": getattr(exc, "violations", [str(exc)])},
              getattr(args, "format", "table"))
        return EXIT_VALIDATION
    except InfeasibleError as exc:
        _emit({"error": "infeasible", "detail": str(exc)},
              getattr(args, "format", "table"))
        return EXIT_INFEASIBLE
    except (PlatformError, CapExceededError, ThrottleAbortError,
            ConcurrentWriteError) as exc:
        _emit({"error": "platform", "detail": str(exc)},
              getattr(args, "format", "table"))
        return EXIT_PLATFORM
    except SizerError as exc:
        _emit({"error": "error", "detail": str(exc)},
              getattr(args, "format", "table"))
        return EXIT_PLATFORM


if __name__ == "__main__":
    sys.exit(main())
