"""Model builder and store.

Fits per-function, per-workload-class latency models (exponential decay in
memory size), derives cost analytically from pricing config, keeps an
empirical reliability table, and persists everything as plain-text JSON
files that diff cleanly under version control.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .core import (
    QualityKind,
    SizerError,
    ValidationError,
    canonical_json,
    check_fields,
    load_json_file,
)

STALENESS_WINDOW_MS = 7 * 24 * 3600 * 1000  # 7 virtual days
FLAG_CONSTANT = "constant"

_XTOL = 1e-9
_MAX_NFEV = 1000
_FALLBACK_B_GRID = np.geomspace(1e-4, 1e-1, 13)


class ConcurrentWriteError(SizerError):
    """Two writers raced on the same model-store key."""


@dataclass(frozen=True)
class FitDiagnostics:
    rmse: float
    n_samples: int
    residuals: tuple  # (size, mean residual) per distinct size

    def to_json(self) -> dict:
        return {"rmse": self.rmse, "n_samples": self.n_samples,
                "residuals": [{"size": s, "mean_residual": r}
                              for s, r in self.residuals]}

    @classmethod
    def from_json(cls, obj: dict) -> "FitDiagnostics":
        check_fields(obj, "FitDiagnostics", ("rmse", "n_samples", "residuals"))
        return cls(float(obj["rmse"]), int(obj["n_samples"]),
                   tuple((int(r["size"]), float(r["mean_residual"]))
                         for r in obj["residuals"]))


@dataclass(frozen=True)
class CostParams:
    price_per_gb_second: float
    price_per_invocation: float = 0.0
    billing_quantum: int = 1

    def to_json(self) -> dict:
        return {"price_per_gb_second": self.price_per_gb_second,
                "price_per_invocation": self.price_per_invocation,
                "billing_quantum": self.billing_quantum}

    @classmethod
    def from_json(cls, obj: dict) -> "CostParams":
        check_fields(obj, "CostParams", ("price_per_gb_second",),
                     ("price_per_invocation", "billing_quantum"))
        return cls(float(obj["price_per_gb_second"]),
                   float(obj.get("price_per_invocation", 0.0)),
                   int(obj.get("billing_quantum", 1)))


def fit_exponential_decay(pairs):
    """Constrained least-squares fit of latency = a*exp(-b*m) + c, a,b,c >= 0.

    Deterministic given the samples: fixed initialization (c from the min
    latency, b from a log-linear regression), fixed tolerances, and a
    geometric multi-start grid over b as the non-convergence fallback.
    Returns ((a, b, c), FitDiagnostics, flags).
    """
    pairs = [(int(m), float(y)) for m, y in pairs]
    if len({m for m, _ in pairs}) < 3:
        raise ValidationError(
            "insufficient distinct sizes: the decay fit needs at least 3")
    m = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    if np.any(y < 0):
        raise ValidationError("latency samples must be non-negative")

    spread = float(y.max() - y.min())
    scale = max(abs(float(y.mean())), 1.0)
    if spread <= 1e-12 * scale:
        params = (0.0, 0.0, float(y.mean()))
        return params, _diagnose(params, pairs), (FLAG_CONSTANT,)

    def residuals(theta):
        a, b, c = theta
        return a * np.exp(-b * m) + c - y

    c0 = 0.9 * float(y.min())
    a0 = spread
    z = np.log(np.maximum(y - c0, 1e-12))
    slope = np.polyfit(m, z, 1)[0]
    b0 = max(-float(slope), 1e-8)

    def solve(x0):
        return least_squares(residuals, x0, bounds=([0.0, 0.0, 0.0], np.inf),
                             xtol=_XTOL, ftol=1e-12, gtol=1e-12,
                             max_nfev=_MAX_NFEV)

    best = solve([a0, b0, c0])
    if not best.success or _rmse(best.fun) > 0.1 * scale:
        for b_start in _FALLBACK_B_GRID:
            candidate = solve([a0, float(b_start), c0])
            if candidate.cost < best.cost:
                best = candidate
    params = tuple(float(v) for v in best.x)
    return params, _diagnose(params, pairs), ()


def _rmse(residuals) -> float:
    return float(np.sqrt(np.mean(np.square(residuals))))


def _diagnose(params, pairs) -> FitDiagnostics:
    a, b, c = params
    by_size = {}
    all_res = []
    for m, y in pairs:
        r = a * math.exp(-b * m) + c - y
        by_size.setdefault(m, []).append(r)
        all_res.append(r)
    per_size = tuple((s, math.fsum(rs) / len(rs)) for s, rs in sorted(by_size.items()))
    return FitDiagnostics(_rmse(np.array(all_res)), len(pairs), per_size)


# ---------------------------------------------------------------------------
# quality model

@dataclass(frozen=True)
class QualityModel:
    function: str
    workload_class: str
    latency_params: tuple                 # (a ms, b 1/MB, c ms)
    fit_diagnostics: FitDiagnostics
    cost_params: CostParams
    reliability_table: dict = field(default_factory=dict)  # size -> fraction
    created_at: int = 0                   # virtual ms
    source_hash: str = ""
    client_overhead_ms: float = 0.0
    flags: tuple = ()

    def __post_init__(self):
        a, b, c = self.latency_params
        if a < 0 or b < 0 or c < 0:
            raise ValidationError("latency params must satisfy a, b, c >= 0")
        object.__setattr__(self, "latency_params", (float(a), float(b), float(c)))
        object.__setattr__(self, "reliability_table",
                           {int(k): float(v) for k, v in self.reliability_table.items()})
        object.__setattr__(self, "flags", tuple(self.flags))

    def elat(self, size: int) -> float:
        a, b, c = self.latency_params
        return a * math.exp(-b * size) + c

    def ecost(self, size: int) -> float:
        q = self.cost_params.billing_quantum
        billed = math.ceil(self.elat(size) / q) * q
        return ((size / 1024) * (billed / 1000)
                * self.cost_params.price_per_gb_second
                + self.cost_params.price_per_invocation)

    def reliability(self, size: int) -> float:
        if not self.reliability_table:
            return 1.0
        bucket = min(self.reliability_table,
                     key=lambda b: (abs(b - size), b))  # nearest, ties smaller
        return self.reliability_table[bucket]

    def to_json(self) -> dict:
        a, b, c = self.latency_params
        return {"function": self.function,
                "workload_class": self.workload_class,
                "latency_params": {"a": a, "b": b, "c": c},
                "fit_diagnostics": self.fit_diagnostics.to_json(),
                "cost_params": self.cost_params.to_json(),
                "reliability_table": {str(k): v
                                      for k, v in sorted(self.reliability_table.items())},
                "created_at": self.created_at,
                "source_hash": self.source_hash,
                "client_overhead_ms": self.client_overhead_ms,
                "flags": list(self.flags)}

    @classmethod
    def from_json(cls, obj: dict) -> "QualityModel":
        check_fields(obj, "QualityModel",
                     ("function", "workload_class", "latency_params",
                      "fit_diagnostics", "cost_params"),
                     ("reliability_table", "created_at", "source_hash",
                      "client_overhead_ms", "flags"))
        lp = obj["latency_params"]
        check_fields(lp, "latency_params", ("a", "b", "c"))
        return cls(str(obj["function"]), str(obj["workload_class"]),
                   (lp["a"], lp["b"], lp["c"]),
                   FitDiagnostics.from_json(obj["fit_diagnostics"]),
                   CostParams.from_json(obj["cost_params"]),
                   {int(k): float(v)
                    for k, v in obj.get("reliability_table", {}).items()},
                   int(obj.get("created_at", 0)),
                   str(obj.get("source_hash", "")),
                   float(obj.get("client_overhead_ms", 0.0)),
                   tuple(obj.get("flags", [])))


def predict(model: QualityModel, size: int, kinds=None) -> dict:
    """Predicted qualities at one memory size."""
    if kinds is None:
        kinds = (QualityKind.ELAT, QualityKind.RLAT, QualityKind.ECOST,
                 QualityKind.RELIABILITY)
    out = {}
    for kind in kinds:
        if kind is QualityKind.ELAT:
            out[kind] = model.elat(size)
        elif kind is QualityKind.RLAT:
            out[kind] = model.elat(size) + model.client_overhead_ms
        elif kind is QualityKind.ECOST:
            out[kind] = model.ecost(size)
        elif kind is QualityKind.RELIABILITY:
            out[kind] = model.reliability(size)
        else:
            raise ValidationError(f"no model component for {kind.value}")
    return out


def build_model_from_samples(function: str, workload_class: str, samples,
                             cost_params: CostParams, *, created_at: int = 0,
                             source_hash: str = "",
                             client_overhead_ms: float = 0.0) -> QualityModel:
    """Fit a QualityModel from validated experiment samples.

    Latency pairs come from valid samples only (cold starts and failures
    already invalidated); the reliability table uses the full pre-filter set.
    """
    pairs = [(s.telemetry.memory_size, s.qualities[QualityKind.ELAT])
             for s in samples if s.valid and s.telemetry is not None]
    if not pairs:
        raise ValidationError(
            f"no valid latency samples for {function}/{workload_class}")
    params, diagnostics, flags = fit_exponential_decay(pairs)

    by_size = {}
    for s in samples:
        if s.telemetry is None:
            continue
        by_size.setdefault(s.telemetry.memory_size, []).append(s.telemetry)
    reliability_table = {
        size: sum(1 for t in records if not t.failed and not t.throttled) / len(records)
        for size, records in by_size.items()}

    return QualityModel(function, workload_class, params, diagnostics,
                        cost_params, reliability_table, created_at,
                        source_hash, client_overhead_ms, flags)


# ---------------------------------------------------------------------------
# model store

@dataclass(frozen=True)
class ModelKey:
    suc_hash: str
    function: str
    workload_class: str

    @property
    def prefix(self) -> str:
        return self.suc_hash[:12]

    def __str__(self):
        return f"{self.prefix}/{self.function}/{self.workload_class}"

    @classmethod
    def parse(cls, text: str) -> "ModelKey":
        parts = text.split("/")
        if len(parts) != 3:
            raise ValidationError(
                f"model key {text!r} must look like <suc-hash>/<function>/<class>")
        return cls(*parts)


class ModelStore:
    """Directory of model files keyed by (SUC hash, function, workload class).

    Files are canonical JSON with stable field order. Writes to one key are
    mutually exclusive; a concurrent writer gets ConcurrentWriteError instead
    of last-write-wins.
    """

    def __init__(self, directory):
        self.directory = Path(directory)

    def path(self, key: ModelKey) -> Path:
        return (self.directory / key.prefix /
                f"{key.function}__{key.workload_class}.json")

    def save(self, key: ModelKey, model: QualityModel) -> Path:
        path = self.path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        lock = path.with_suffix(".json.lock")
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConcurrentWriteError(
                f"model {key} is being written by another process") from None
        try:
            path.write_text(canonical_json(model.to_json()), encoding="utf-8")
        finally:
            os.close(fd)
            os.unlink(lock)
        return path

    def load(self, key: ModelKey) -> QualityModel | None:
        path = self.path(key)
        if not path.exists():
            return None
        return QualityModel.from_json(load_json_file(path))

    def keys(self) -> list:
        found = []
        if not self.directory.exists():
            return found
        for prefix_dir in sorted(self.directory.iterdir()):
            if not prefix_dir.is_dir():
                continue
            for path in sorted(prefix_dir.glob("*.json")):
                function, _, workload_class = path.stem.partition("__")
                found.append(ModelKey(prefix_dir.name, function, workload_class))
        return found


def get_or_build_model(key: ModelKey, source_hash: str, store: ModelStore,
                       tactics, builder, now_ms: int,
                       staleness_ms: int = STALENESS_WINDOW_MS):
    """Serve a cached model or build and persist a fresh one.

    `builder` runs the experiment + fit and returns a QualityModel; it is
    only invoked on a cache miss. Returns (model, provenance) where
    provenance records {"source": "cached"|"rebuilt", "warnings": [...]}.
    """
    if tactics.reuse_model:
        lookup = key
        if isinstance(tactics.reuse_model, str):
            lookup = ModelKey(tactics.reuse_model, key.function, key.workload_class)
        model = store.load(lookup)
        if model is None:
            raise ValidationError(f"model reuse requested but {lookup} is absent")
        warnings = []
        if model.source_hash != source_hash:
            warnings.append("stale: model was built from different inputs")
        elif now_ms - model.created_at > staleness_ms:
            warnings.append("stale: model is older than the staleness window")
        return model, {"source": "cached", "warnings": warnings}

    cached = store.load(key)
    if (cached is not None and cached.source_hash == source_hash
            and now_ms - cached.created_at <= staleness_ms):
        return cached, {"source": "cached", "warnings": []}
    model = builder()
    store.save(key, model)
    return model, {"source": "rebuilt", "warnings": []}
