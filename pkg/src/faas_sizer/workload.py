"""Workload controller: client emulation over the platform interface.

Generates events per workload class, drives whole-composition runs through
an event-ordered scheduler, and validates/invalidates samples (cold starts,
throttles, failures) before they feed any model.
"""

from __future__ import annotations

import heapq
import itertools
import math
import re
from dataclasses import dataclass, field
from hashlib import blake2b
from random import Random

from .core import (
    FunctionRef,
    Parallel,
    PROB_TOL,
    Sample,
    SchemaError,
    Sequence,
    Switch,
    ValidationError,
    check_fields,
)

_CLOSED_LOOP_RE = re.compile(r"^closed-loop\((\d+)\)$")


@dataclass(frozen=True)
class WorkloadClass:
    id: str
    relative_frequency: float
    payload_descriptor: str = ""

    def to_json(self) -> dict:
        return {"id": self.id, "relative_frequency": self.relative_frequency,
                "payload_descriptor": self.payload_descriptor}


@dataclass(frozen=True)
class WorkloadModel:
    """Event classes with relative frequencies, plus the client pacing model.

    target_rate is either requests/s (open loop) or the string
    "closed-loop(n)" for n looping clients. client_overhead_ms is the
    client-side latency added on top of execution latency (RLat = ELat +
    overhead).
    """

    classes: tuple
    target_rate: float | str = 1.0
    client_overhead_ms: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.classes:
            raise ValidationError("workload model has no classes")
        freqs = [c.relative_frequency for c in self.classes]
        if any(f <= 0 for f in freqs):
            raise ValidationError("class frequencies must be positive")
        if abs(math.fsum(freqs) - 1.0) > PROB_TOL:
            raise ValidationError(f"class frequencies sum to {math.fsum(freqs):g}")
        if isinstance(self.target_rate, str) and not _CLOSED_LOOP_RE.match(self.target_rate):
            raise ValidationError(f"malformed target_rate {self.target_rate!r}")

    @property
    def class_ids(self) -> list:
        return [c.id for c in self.classes]

    def frequency_of(self, class_id: str) -> float:
        for c in self.classes:
            if c.id == class_id:
                return c.relative_frequency
        raise KeyError(class_id)

    def closed_loop_clients(self) -> int | None:
        if isinstance(self.target_rate, str):
            return int(_CLOSED_LOOP_RE.match(self.target_rate).group(1))
        return None

    def to_json(self) -> dict:
        return {"classes": [c.to_json() for c in self.classes],
                "target_rate": self.target_rate,
                "client_overhead_ms": self.client_overhead_ms}

    @classmethod
    def from_json(cls, obj: dict) -> "WorkloadModel":
        check_fields(obj, "WorkloadModel", ("classes",),
                     ("target_rate", "client_overhead_ms"))
        classes = []
        for c in obj["classes"]:
            check_fields(c, "WorkloadClass", ("id", "relative_frequency"),
                         ("payload_descriptor",))
            classes.append(WorkloadClass(str(c["id"]), float(c["relative_frequency"]),
                                         str(c.get("payload_descriptor", ""))))
        rate = obj.get("target_rate", 1.0)
        if not isinstance(rate, str):
            rate = float(rate)
        return cls(tuple(classes), rate, float(obj.get("client_overhead_ms", 0.0)))


@dataclass(frozen=True)
class Event:
    class_id: str
    payload_descriptor: str = ""
    issued_at: int = 0

    def to_json(self) -> dict:
        return {"class_id": self.class_id,
                "payload_descriptor": self.payload_descriptor,
                "issued_at": self.issued_at}


def generate_events(model: WorkloadModel, n: int, seed: int = 0) -> list:
    """Deterministic event list: class mix follows the relative frequencies,
    timestamps follow target_rate (open loop) or start at 0 (closed loop)."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    rng = Random(seed)
    weights = [c.relative_frequency for c in model.classes]
    picks = rng.choices(model.classes, weights=weights, k=n)
    events = []
    clients = model.closed_loop_clients()
    for i, cls in enumerate(picks):
        at = 0 if clients is not None else round(i * 1000.0 / model.target_rate)
        events.append(Event(cls.id, cls.payload_descriptor, at))
    return events


# ---------------------------------------------------------------------------
# sample validation

REASON_COLD_START = "cold_start"
REASON_THROTTLED = "throttled"
REASON_FAILED = "failed"


def invalidation_reason(telemetry, drop_cold_starts: bool = True,
                        drop_throttled: bool = True,
                        drop_failed_for_latency: bool = True) -> str | None:
    if telemetry is None:
        return None
    if drop_throttled and telemetry.throttled:
        return REASON_THROTTLED
    if drop_cold_starts and telemetry.cold_start:
        return REASON_COLD_START
    if drop_failed_for_latency and telemetry.failed:
        return REASON_FAILED
    return None


def validate_and_filter(samples, drop_cold_starts: bool = True,
                        drop_throttled: bool = True,
                        drop_failed_for_latency: bool = True):
    """Partition samples into (valid, invalidated-with-reason).

    Invalidated samples are excluded from latency/cost model input but stay
    available for reliability estimation, which is always computed over the
    full pre-filter set.
    """
    valid, invalidated = [], []
    for s in samples:
        reason = invalidation_reason(s.telemetry, drop_cold_starts,
                                     drop_throttled, drop_failed_for_latency)
        if reason is None:
            valid.append(s)
        else:
            invalidated.append(s if not s.valid else s.invalidated(reason))
    return valid, invalidated


def reliability_estimate(samples) -> float:
    """Successes / total over all (pre-filter) samples."""
    if not samples:
        raise ValidationError("reliability estimate over empty sample set")
    successes = sum(1 for s in samples
                    if s.telemetry is not None
                    and not s.telemetry.failed and not s.telemetry.throttled)
    return successes / len(samples)


def reliability_by_group(samples) -> dict:
    """Reliability per (policy, workload class) pair, pre-filter."""
    groups = {}
    for s in samples:
        groups.setdefault((s.policy, s.workload_class), []).append(s)
    return {key: reliability_estimate(group) for key, group in groups.items()}


# ---------------------------------------------------------------------------
# whole-composition client runs

@dataclass
class CompositionRun:
    started_at: int
    finished_at: float
    billed_cost: float
    success: bool
    saw_cold_start: bool
    saw_throttle: bool
    invocations: list = field(default_factory=list)  # (function, result, telemetry)

    @property
    def elat_ms(self) -> float:
        return self.finished_at - self.started_at


def _switch_u01(seed: int, run_index: int, path: tuple) -> float:
    material = f"switch|{run_index}|{'/'.join(map(str, path))}".encode()
    digest = blake2b(material, digest_size=8,
                     key=int(seed).to_bytes(8, "little", signed=True)).digest()
    return (int.from_bytes(digest, "big") + 0.5) / 2.0**64


def run_composition(platform, deployment, event: Event, at: int,
                    seed: int = 0, run_index: int = 0) -> CompositionRun:
    """Execute one client event through the whole composition DAG.

    An explicit event queue issues function invocations in global virtual-time
    order (parallel branches interleave correctly); sequences abort on the
    first failed function, matching the product rule for reliability.
    """
    suc = platform.suc
    heap = []
    counter = itertools.count()
    run = CompositionRun(started_at=at, finished_at=float(at),
                         billed_cost=0.0, success=True,
                         saw_cold_start=False, saw_throttle=False)

    def schedule(t, thunk):
        heapq.heappush(heap, (t, next(counter), thunk))

    def exec_node(node, t, done, path):
        if isinstance(node, FunctionRef):
            def thunk():
                issue_at = int(math.ceil(t))
                result, record = platform.invoke(deployment.id, node.name,
                                                 event, issue_at)
                run.invocations.append((node.name, result, record))
                run.billed_cost += record.billed_cost
                run.saw_cold_start |= record.cold_start
                run.saw_throttle |= record.throttled
                done(result.finished_at, result.ok)
            schedule(t, thunk)
        elif isinstance(node, Sequence):
            children = node.children

            def step(i, t_now):
                if i == len(children):
                    done(t_now, True)
                    return
                def child_done(end, ok):
                    if ok:
                        step(i + 1, end)
                    else:
                        done(end, False)  # abort the rest of the chain
                exec_node(children[i], t_now, child_done, path + (i,))

            step(0, t)
        elif isinstance(node, Parallel):
            children = node.children
            if not children:
                done(t, True)
                return
            state = {"pending": len(children), "end": t, "ok": True}

            def child_done(end, ok):
                state["pending"] -= 1
                state["end"] = max(state["end"], end)
                state["ok"] = state["ok"] and ok
                if state["pending"] == 0:
                    done(state["end"], state["ok"])

            for i, child in enumerate(children):
                exec_node(child, t, child_done, path + (i,))
        elif isinstance(node, Switch):
            u = _switch_u01(seed, run_index, path)
            acc = 0.0
            chosen_i, chosen = len(node.branches) - 1, node.branches[-1][1]
            for i, (p, child) in enumerate(node.branches):
                acc += p
                if u < acc:
                    chosen_i, chosen = i, child
                    break
            exec_node(chosen, t, done, path + (chosen_i,))
        else:
            raise SchemaError(f"unknown composition node {type(node).__name__}")

    def finished(end, ok):
        run.finished_at = end
        run.success = ok

    exec_node(suc.composition.root, float(at), finished, ())
    while heap:
        _, _, thunk = heapq.heappop(heap)
        thunk()
    return run
