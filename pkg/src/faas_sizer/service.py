"""HTTP API wrapping sizing, experiment, and model operations for the web UI.

The service is stateless over the artifact directory: every request runs
against a fresh simulator seeded from (request content, seed), job ids are
content hashes, and responses are byte-identical across restarts. Requests
with reuse_model set are answered synchronously; experiment-backed sizings
return 202 plus an id to poll.
"""

from __future__ import annotations

import json
import threading
from hashlib import sha256
from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, Response

from .core import (
    InfeasibleError,
    SchemaError,
    SizerError,
    SystemUnderConfiguration,
    ValidationError,
    canonical_json,
)
from .experiment import SamplingPlan, TacticConfig, execute_plan, monotonic_prune_sweep
from .modeling import ConcurrentWriteError, ModelStore
from .simulator import GroundTruth, PlatformConfig, SimulatedPlatform
from .sizing import SizingRequest, run_sizing
from .workload import WorkloadModel


class SizerService:
    def __init__(self, suc: SystemUnderConfiguration,
                 platform_config: PlatformConfig, ground_truth: GroundTruth,
                 workload: WorkloadModel, model_dir, artifact_dir,
                 seed: int = 0, ui_dir=None):
        self.suc = suc
        self.platform_config = platform_config
        self.ground_truth = ground_truth
        self.workload = workload
        self.store = ModelStore(model_dir)
        self.artifact_dir = Path(artifact_dir)
        self.seed = seed
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self._job_lock = threading.Lock()  # simulator is single-writer
        self.app = self._build_app()

    # -- persistence ---------------------------------------------------------

    def _record_path(self, kind: str, job_id: str) -> Path:
        return self.artifact_dir / kind / f"{job_id}.json"

    def _save_record(self, kind: str, job_id: str, record: dict) -> None:
        path = self._record_path(kind, job_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(canonical_json(record), encoding="utf-8")
        index_path = self.artifact_dir / "jobs.json"
        index = {}
        if index_path.exists():
            index = json.loads(index_path.read_text(encoding="utf-8"))
        index[job_id] = {"kind": kind, "status": record.get("status", "done")}
        index_path.write_text(canonical_json(index), encoding="utf-8")

    def _load_record(self, kind: str, job_id: str) -> dict | None:
        path = self._record_path(kind, job_id)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    @staticmethod
    def _job_id(payload: dict, seed: int) -> str:
        return sha256(canonical_json({"payload": payload,
                                      "seed": seed}).encode()).hexdigest()[:16]

    # -- execution -----------------------------------------------------------

    def _fresh_platform(self, seed: int) -> SimulatedPlatform:
        config = PlatformConfig.from_json({**self.platform_config.to_json(),
                                           "rng_seed": seed})
        return SimulatedPlatform(self.suc, config, self.ground_truth)

    def _run_sizing_job(self, request: SizingRequest, job_id: str, seed: int) -> dict:
        with self._job_lock:
            platform = self._fresh_platform(seed)
            result, artifacts = run_sizing(
                self.suc, request.goal, request.workload or self.workload,
                request.tactics, platform, self.store, seed=seed,
                apply=request.apply)
        record = {"id": job_id, "status": "done",
                  "request": request.to_json(),
                  "seed": seed,
                  "result": result.to_json(),
                  "per_task": {"sample": artifacts.sample_time_ms,
                               "model": 0, "match": 0},
                  "sampling_cost": artifacts.sampling_cost,
                  "platform_invocations": artifacts.platform_invocations}
        self._save_record("sizings", job_id, record)
        return record

    # -- app -----------------------------------------------------------------

    def _build_app(self) -> FastAPI:
        app = FastAPI(title="faas-sizer service", version="0.1.0",
                      description="Sizing middleware API for the what-if UI")

        def validation_response(violations, status=400):
            return JSONResponse({"error": "validation",
                                 "violations": list(violations)},
                                status_code=status)

        @app.get("/api/suc")
        def get_suc():
            return JSONResponse(self.suc.to_json())

        @app.get("/api/models")
        def get_models():
            models = []
            for key in self.store.keys():
                model = self.store.load(key)
                models.append({"key": str(key), "function": key.function,
                               "workload_class": key.workload_class,
                               "created_at": model.created_at,
                               "flags": list(model.flags)})
            return JSONResponse({"models": models})

        @app.post("/api/sizings")
        async def post_sizing(request: Request,
                              seed: int | None = Query(default=None)):
            try:
                body = await request.json()
            except Exception:
                return validation_response(["request body is not JSON"])
            try:
                sizing_request = SizingRequest.from_json(body)
            except (SchemaError, ValidationError) as exc:
                return validation_response(getattr(exc, "violations", [str(exc)]))
            problems = sizing_request.validate()
            if problems:
                return validation_response(problems)
            effective_seed = self.seed if seed is None else seed
            job_id = self._job_id(body, effective_seed)
            record = self._load_record("sizings", job_id)
            if record is None:
                try:
                    record = self._run_sizing_job(sizing_request, job_id,
                                                  effective_seed)
                except (SchemaError, ValidationError) as exc:
                    return validation_response(getattr(exc, "violations",
                                                       [str(exc)]))
                except ConcurrentWriteError as exc:
                    return JSONResponse({"error": "conflict", "detail": str(exc)},
                                        status_code=409)
                except InfeasibleError as exc:
                    return JSONResponse({"error": "infeasible",
                                         "detail": str(exc)}, status_code=422)
                except SizerError as exc:
                    return JSONResponse({"error": "platform", "detail": str(exc)},
                                        status_code=400)
            synchronous = bool(sizing_request.tactics.reuse_model)
            if synchronous:
                if record["result"]["infeasible"]:
                    return JSONResponse(record, status_code=422)
                return JSONResponse(record)
            return JSONResponse({"id": job_id, "status": record["status"],
                                 "poll": f"/api/sizings/{job_id}"},
                                status_code=202)

        @app.get("/api/sizings/{job_id}")
        def get_sizing(job_id: str):
            record = self._load_record("sizings", job_id)
            if record is None:
                return JSONResponse({"error": "not_found", "id": job_id},
                                    status_code=404)
            return JSONResponse(record)

        @app.post("/api/experiments")
        async def post_experiment(request: Request,
                                  seed: int | None = Query(default=None)):
            try:
                body = await request.json()
            except Exception:
                return validation_response(["request body is not JSON"])
            try:
                plan = SamplingPlan.from_json(body.get("plan", {}))
                tactics = TacticConfig.from_json(body.get("tactics", {}))
            except (SchemaError, ValidationError) as exc:
                return validation_response(getattr(exc, "violations", [str(exc)]))
            effective_seed = self.seed if seed is None else seed
            job_id = self._job_id(body, effective_seed)
            record = self._load_record("experiments", job_id)
            if record is None:
                try:
                    with self._job_lock:
                        platform = self._fresh_platform(effective_seed)
                        if tactics.monotonic_prune is not None:
                            report = monotonic_prune_sweep(
                                plan, tactics.monotonic_prune, tactics,
                                platform, self.workload)
                        else:
                            report = execute_plan(plan, tactics, platform,
                                                  self.workload)
                except (SchemaError, ValidationError) as exc:
                    return validation_response(getattr(exc, "violations",
                                                       [str(exc)]))
                except SizerError as exc:
                    return JSONResponse({"error": "platform", "detail": str(exc)},
                                        status_code=400)
                record = {"id": job_id, "status": "done",
                          "seed": effective_seed, "report": report.to_json()}
                self._save_record("experiments", job_id, record)
            return JSONResponse({"id": job_id, "status": record["status"],
                                 "poll": f"/api/experiments/{job_id}"},
                                status_code=202)

        @app.get("/api/experiments/{job_id}")
        def get_experiment(job_id: str):
            record = self._load_record("experiments", job_id)
            if record is None:
                return JSONResponse({"error": "not_found", "id": job_id},
                                    status_code=404)
            return JSONResponse(record)

        @app.get("/api/pareto")
        def get_pareto(sizing: str = Query(...)):
            record = self._load_record("sizings", sizing)
            if record is None:
                return JSONResponse({"error": "not_found", "id": sizing},
                                    status_code=404)
            return JSONResponse({"sizing": sizing,
                                 "pareto_front": record["result"]["pareto_front"]})

        if self.ui_dir and self.ui_dir.exists():
            from fastapi.staticfiles import StaticFiles
            app.mount("/ui", StaticFiles(directory=str(self.ui_dir), html=True),
                      name="ui")

        @app.get("/")
        def root():
            return Response(status_code=307, headers={"Location": "/ui/"}) \
                if self.ui_dir and self.ui_dir.exists() \
                else JSONResponse({"service": "faas-sizer", "api": "/api"})

        return app

    def write_openapi(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(canonical_json(self.app.openapi()),
                              encoding="utf-8")


def build_service(*, suc, platform_config, ground_truth, workload, model_dir,
                  artifact_dir, seed=0, ui_dir=None) -> SizerService:
    default_ui = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return SizerService(suc, platform_config, ground_truth, workload,
                        model_dir, artifact_dir, seed,
                        ui_dir or (default_ui if default_ui.exists() else None))
