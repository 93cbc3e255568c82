"""Deterministic virtual-time FaaS platform.

Implements the platform interface (deploy / invoke / telemetry) against
configurable ground-truth quality functions, so every experiment in this
repository is reproducible on a desk: cold starts emerge from slot
keep-alive mechanics, deployments converge after a configurable lag during
which a redeployed stack still serves its previous policy, concurrency is
capped platform-wide, and billing is work-based (GB-seconds).

Determinism contract: all randomness is derived from ``rng_seed`` through
keyed hash streams. Noise and failure draws are keyed by
(function, workload class, memory, occurrence index), so the k-th execution
of a function at a given size sees the same draw no matter how invocations
from different deployments interleave. Identical (config, ground truth,
invocation sequence) therefore produce bit-identical telemetry.

Virtual time is a single non-decreasing millisecond clock; parallelism is
overlapping intervals inside one state machine, never host threads. Callers
must serialize access (single-writer contract).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from hashlib import blake2b
from statistics import NormalDist

from .core import (
    KnobKind,
    PlatformError,
    Policy,
    QualityKind,
    SchemaError,
    SystemUnderConfiguration,
    TelemetryRecord,
    canonical_json,
    check_fields,
)
from .sizing import aggregate_composition

_STD_NORMAL = NormalDist()


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class PlatformConfig:
    max_concurrent_executions: int = 100
    slot_concurrency: int = 1
    keep_alive: int = 300_000                      # ms
    deployment_convergence: tuple = (1_000, 5_000)  # (min ms, max ms), uniform
    billing_quantum: int = 1                       # ms
    price_per_gb_second: float = 0.0000166667      # USD
    price_per_invocation: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        lo, hi = self.deployment_convergence
        object.__setattr__(self, "deployment_convergence", (int(lo), int(hi)))
        if lo < 0 or hi < lo:
            raise SchemaError("deployment_convergence must satisfy 0 <= min <= max")
        if self.keep_alive < 0 or self.billing_quantum < 1:
            raise SchemaError("durations must be >= 0 and billing_quantum >= 1")
        if self.price_per_gb_second < 0 or self.price_per_invocation < 0:
            raise SchemaError("prices must be >= 0")
        if self.slot_concurrency < 1 or self.max_concurrent_executions < 1:
            raise SchemaError("concurrency limits must be >= 1")

    def to_json(self) -> dict:
        return {"max_concurrent_executions": self.max_concurrent_executions,
                "slot_concurrency": self.slot_concurrency,
                "keep_alive": self.keep_alive,
                "deployment_convergence": list(self.deployment_convergence),
                "billing_quantum": self.billing_quantum,
                "price_per_gb_second": self.price_per_gb_second,
                "price_per_invocation": self.price_per_invocation,
                "rng_seed": self.rng_seed}

    @classmethod
    def from_json(cls, obj: dict) -> "PlatformConfig":
        check_fields(obj, "PlatformConfig", (),
                     ("max_concurrent_executions", "slot_concurrency", "keep_alive",
                      "deployment_convergence", "billing_quantum",
                      "price_per_gb_second", "price_per_invocation", "rng_seed"))
        kwargs = dict(obj)
        if "deployment_convergence" in kwargs:
            kwargs["deployment_convergence"] = tuple(kwargs["deployment_convergence"])
        return cls(**kwargs)


@dataclass(frozen=True)
class GroundTruthEntry:
    """Latency = a*exp(-b*m) + c, monotonically non-increasing in memory m."""

    a: float                     # ms
    b: float                     # 1/MB
    c: float                     # ms
    noise_sigma: float = 0.0     # multiplicative log-normal, median-preserving
    m_required: int = 0          # MB; below this the invocation fails (OOM)
    base_failure_rate: float = 0.0
    cold_start_extra: tuple = (0.0, 0.0, 0.0)  # (a_cs, b_cs, c_cs), same form

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or self.c < 0:
            raise SchemaError("ground truth requires a, b, c >= 0")
        if not (0.0 <= self.base_failure_rate <= 1.0):
            raise SchemaError("base_failure_rate outside [0, 1]")
        object.__setattr__(self, "cold_start_extra",
                           tuple(float(x) for x in self.cold_start_extra))

    def latency(self, m: int) -> float:
        return self.a * math.exp(-self.b * m) + self.c

    def cold_extra(self, m: int) -> float:
        a, b, c = self.cold_start_extra
        return a * math.exp(-b * m) + c

    def to_json(self) -> dict:
        a, b, c = self.cold_start_extra
        return {"a": self.a, "b": self.b, "c": self.c,
                "noise_sigma": self.noise_sigma,
                "m_required": self.m_required,
                "base_failure_rate": self.base_failure_rate,
                "cold_start_extra": {"a": a, "b": b, "c": c}}


class GroundTruth:
    """Per (function, workload class) quality functions driving the simulator."""

    def __init__(self, entries: dict):
        self._entries = dict(entries)

    def entry(self, function: str, workload_class: str) -> GroundTruthEntry:
        try:
            return self._entries[(function, workload_class)]
        except KeyError:
            raise PlatformError(
                f"no ground truth for function {function!r}, "
                f"workload class {workload_class!r}") from None

    def items(self):
        return self._entries.items()

    def to_json(self) -> dict:
        return {"entries": [
            {"function": fn, "workload_class": wc, **entry.to_json()}
            for (fn, wc), entry in sorted(self._entries.items())]}

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        check_fields(obj, "GroundTruth", ("entries",))
        entries = {}
        for item in obj["entries"]:
            check_fields(item, "GroundTruth entry",
                         ("function", "workload_class", "a", "b", "c"),
                         ("noise_sigma", "m_required", "base_failure_rate",
                          "cold_start_extra"))
            extra = item.get("cold_start_extra", {"a": 0.0, "b": 0.0, "c": 0.0})
            check_fields(extra, "cold_start_extra", ("a", "b", "c"))
            entries[(str(item["function"]), str(item["workload_class"]))] = \
                GroundTruthEntry(
                    float(item["a"]), float(item["b"]), float(item["c"]),
                    float(item.get("noise_sigma", 0.0)),
                    int(item.get("m_required", 0)),
                    float(item.get("base_failure_rate", 0.0)),
                    (extra["a"], extra["b"], extra["c"]))
        return cls(entries)


def uniform_ground_truth(suc: SystemUnderConfiguration, workload_classes,
                         **entry_kwargs) -> GroundTruth:
    """Same GroundTruthEntry for every (function, class) pair; test helper."""
    entry = GroundTruthEntry(**entry_kwargs)
    return GroundTruth({(fn, wc): entry
                        for fn in suc.function_names for wc in workload_classes})


# ---------------------------------------------------------------------------
# runtime state

@dataclass
class _Slot:
    memory: int
    concurrency: int
    ends: list = field(default_factory=list)  # active execution end times
    last_use: float = 0.0

    def prune(self, at: float):
        self.ends = [e for e in self.ends if e > at]

    def available(self, at: float) -> bool:
        self.prune(at)
        return len(self.ends) < self.concurrency

    def warm(self, at: float, keep_alive: float) -> bool:
        if not self.available(at):
            return False
        return bool(self.ends) or at - self.last_use <= keep_alive


@dataclass
class Deployment:
    id: str
    policy: Policy
    created_at: int
    converged_at: int
    prior_policy: Policy | None = None
    slots: dict = field(default_factory=dict)        # function -> [_Slot]
    stale_slots: dict = field(default_factory=dict)  # prior-policy slot pools

    def to_json(self) -> dict:
        return {"id": self.id, "policy": self.policy.to_json(),
                "created_at": self.created_at, "converged_at": self.converged_at}


@dataclass(frozen=True)
class InvocationResult:
    status: str          # "ok" | "failed" | "throttled"
    elat_ms: float
    started_at: int
    finished_at: float
    cold_start: bool
    memory_mb: int

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class SimulatedPlatform:
    """Single-writer virtual-time FaaS platform over a registered SUC."""

    def __init__(self, suc: SystemUnderConfiguration, config: PlatformConfig,
                 ground_truth: GroundTruth):
        self.suc = suc
        self.config = config
        self.ground_truth = ground_truth
        self.clock_ms = 0
        self.invocation_count = 0          # every invoke() call, throttled included
        self.telemetry = []                # (deployment_id, function, at, record)
        self._deployments = {}
        self._deploy_counter = 0
        self._active_ends = []             # heap of in-flight execution end times
        self._occurrences = {}             # (fn, class, memory) -> count

    # -- deterministic streams ------------------------------------------------

    def _u01(self, *key) -> float:
        material = "|".join(str(k) for k in key).encode()
        seed = self.config.rng_seed.to_bytes(8, "little", signed=True)
        digest = blake2b(material, digest_size=8, key=seed).digest()
        return (int.from_bytes(digest, "big") + 0.5) / 2.0**64

    def _noise_factor(self, sigma: float, *key) -> float:
        if sigma <= 0.0:
            return 1.0
        z = _STD_NORMAL.inv_cdf(self._u01(*key))
        return math.exp(sigma * z)

    # -- platform interface ---------------------------------------------------

    def deploy(self, policy: Policy, at: int | None = None,
               update_of: str | None = None) -> Deployment:
        at = self.clock_ms if at is None else int(at)
        self._advance(at)
        problems = policy.validate(self.suc)
        if problems:
            raise PlatformError("invalid policy: " + "; ".join(problems))
        lo, hi = self.config.deployment_convergence
        self._deploy_counter += 1
        lag = lo if hi == lo else lo + int(self._u01("deploy", self._deploy_counter) * (hi - lo + 1))
        lag = min(lag, hi)
        dep = Deployment(id=f"d{self._deploy_counter:04d}", policy=policy,
                         created_at=at, converged_at=at + lag)
        if update_of is not None:
            prior = self._deployment(update_of)
            dep.prior_policy = prior.policy
            dep.stale_slots = prior.slots  # old slots keep serving until convergence
        self._deployments[dep.id] = dep
        return dep

    def invoke(self, deployment_id: str, function: str, event, at: int):
        """Execute one event; returns (InvocationResult, TelemetryRecord)."""
        at = int(at)
        if at < self.clock_ms:
            raise PlatformError(
                f"time travel: invoke at {at} ms behind platform clock {self.clock_ms} ms")
        dep = self._deployment(deployment_id)
        if at < dep.created_at:
            raise PlatformError("invoke precedes deployment creation")
        self._advance(at)
        self.invocation_count += 1
        if function not in self.suc.function_names:
            raise PlatformError(f"unknown function {function!r}")

        workload_class = getattr(event, "class_id", str(event))
        truth = self.ground_truth.entry(function, workload_class)

        # inconsistent-deployment window: stale policy until convergence
        if at < dep.converged_at and dep.prior_policy is not None:
            policy, pools = dep.prior_policy, dep.stale_slots
        else:
            policy, pools = dep.policy, dep.slots
        memory = policy.memory_of(function)

        # platform-wide concurrency limit
        while self._active_ends and self._active_ends[0] <= at:
            heapq.heappop(self._active_ends)
        if len(self._active_ends) >= self.config.max_concurrent_executions:
            record = TelemetryRecord(billed_duration=0, memory_size=memory,
                                     cold_start=False, billed_cost=0.0,
                                     throttled=True, failed=True)
            self.telemetry.append((deployment_id, function, at, record))
            return (InvocationResult("throttled", 0.0, at, at, False, memory), record)

        occ_key = (function, workload_class, memory)
        occurrence = self._occurrences.get(occ_key, 0)
        self._occurrences[occ_key] = occurrence + 1

        slot, cold = self._acquire_slot(pools, policy, function, memory, at)

        noise = self._noise_factor(truth.noise_sigma, "noise", *occ_key, occurrence)
        elat = truth.latency(memory) * noise
        if cold:
            elat += truth.cold_extra(memory)

        failed = memory < truth.m_required
        if not failed and truth.base_failure_rate > 0.0:
            failed = self._u01("fail", *occ_key, occurrence) < truth.base_failure_rate

        end = at + elat
        slot.ends.append(end)
        slot.last_use = end
        heapq.heappush(self._active_ends, end)

        quantum = self.config.billing_quantum
        billed_duration = math.ceil(elat / quantum) * quantum
        billed_cost = ((memory / 1024) * (billed_duration / 1000)
                       * self.config.price_per_gb_second
                       + self.config.price_per_invocation)
        record = TelemetryRecord(billed_duration=billed_duration, memory_size=memory,
                                 cold_start=cold, billed_cost=billed_cost,
                                 throttled=False, failed=failed)
        self.telemetry.append((deployment_id, function, at, record))
        status = "failed" if failed else "ok"
        return (InvocationResult(status, elat, at, end, cold, memory), record)

    # -- oracles (test support) ------------------------------------------------

    def oracle_function_qualities(self, function: str, memory: int,
                                  workload_class: str,
                                  client_overhead_ms: float = 0.0) -> dict:
        """Noise-free expected qualities of one warm function execution."""
        truth = self.ground_truth.entry(function, workload_class)
        elat = truth.latency(memory)
        quantum = self.config.billing_quantum
        billed = math.ceil(elat / quantum) * quantum
        cost = ((memory / 1024) * (billed / 1000) * self.config.price_per_gb_second
                + self.config.price_per_invocation)
        reliability = 0.0 if memory < truth.m_required else 1.0 - truth.base_failure_rate
        return {QualityKind.ELAT: elat,
                QualityKind.RLAT: elat + client_overhead_ms,
                QualityKind.ECOST: cost,
                QualityKind.RELIABILITY: reliability}

    def oracle_qualities(self, policy: Policy, workload_class: str,
                         client_overhead_ms: float = 0.0) -> dict:
        """Noise-free qualities of the whole composition under `policy`."""
        per_function = {
            fn: self.oracle_function_qualities(fn, policy.memory_of(fn),
                                               workload_class, client_overhead_ms)
            for fn in self.suc.function_names}
        return aggregate_composition(self.suc.composition.root, per_function)

    # -- telemetry export -------------------------------------------------------

    def telemetry_jsonl(self) -> str:
        import json
        return "".join(json.dumps(record.to_json(), sort_keys=True) + "\n"
                       for _, _, _, record in self.telemetry)

    def total_billed_cost(self) -> float:
        return math.fsum(record.billed_cost for _, _, _, record in self.telemetry)

    # -- internals ---------------------------------------------------------------

    def _deployment(self, deployment_id: str) -> Deployment:
        try:
            return self._deployments[deployment_id]
        except KeyError:
            raise PlatformError(f"unknown deployment {deployment_id!r}") from None

    def advance_clock(self, at: int):
        """Let virtual time pass without any platform activity (a controller
        waiting out a run block)."""
        self._advance(int(at))

    def _advance(self, at: int):
        if at < self.clock_ms:
            raise PlatformError(
                f"time travel: {at} ms behind platform clock {self.clock_ms} ms")
        self.clock_ms = at

    def _slot_concurrency(self, policy: Policy, function: str) -> int:
        override = policy.value_of(function, KnobKind.SLOT_CONCURRENCY)
        return override if override is not None else self.config.slot_concurrency

    def _acquire_slot(self, pools: dict, policy: Policy, function: str,
                      memory: int, at: int):
        """Find a warm slot with spare capacity, or provision a cold one."""
        pool = pools.setdefault(function, [])
        warm = [s for s in pool
                if s.memory == memory and s.warm(at, self.config.keep_alive)]
        if warm:
            return max(warm, key=lambda s: s.last_use), False  # MRU reuse
        slot = _Slot(memory=memory,
                     concurrency=self._slot_concurrency(policy, function))
        pool.append(slot)
        return slot, True


def platform_fingerprint(config: PlatformConfig, ground_truth: GroundTruth) -> str:
    """Content hash identifying a simulated platform setup."""
    from hashlib import sha256
    payload = canonical_json({"config": config.to_json(),
                              "ground_truth": ground_truth.to_json()})
    return sha256(payload.encode()).hexdigest()
