import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faas_sizer import (
    Event,
    GroundTruth,
    GroundTruthEntry,
    PlatformConfig,
    PlatformError,
    Policy,
    QualityKind,
    SimulatedPlatform,
)

from conftest import chain_suc, make_platform, single_suc

EVENT = Event("w", "payload-w")


def policy_for(suc, memory):
    return Policy({fn: {"Memory": memory} for fn in suc.function_names})


class TestInvoke:
    def test_warm_execution_matches_closed_form(self):
        # 1000 * exp(-0.002 * 1024) + 200, evaluated independently
        expected = 1000.0 * math.exp(-2.048) + 200.0
        suc = single_suc()
        platform = make_platform(suc, cold_start_extra=(500.0, 0.001, 100.0))
        dep = platform.deploy(policy_for(suc, 1024))
        cold_res, cold_rec = platform.invoke(dep.id, "f1", EVENT, 0)
        warm_res, warm_rec = platform.invoke(dep.id, "f1", EVENT, 5_000)
        assert cold_rec.cold_start and not warm_rec.cold_start
        assert warm_res.elat_ms == pytest.approx(expected, rel=1e-12)
        assert cold_res.elat_ms > warm_res.elat_ms

    def test_memory_below_required_always_fails(self):
        suc = single_suc()
        platform = make_platform(suc, m_required=512)
        dep = platform.deploy(policy_for(suc, 128))
        res, rec = platform.invoke(dep.id, "f1", EVENT, 0)
        assert rec.failed and res.status == "failed"

    def test_billing_arithmetic_exact(self):
        # 8000 ms at 1024 MB and 0.2 USD/GB-s bills exactly 1.6 USD
        suc = single_suc()
        platform = make_platform(suc, a=7800.0, b=0.0, c=200.0)
        dep = platform.deploy(policy_for(suc, 1024))
        _, rec = platform.invoke(dep.id, "f1", EVENT, 0)
        assert rec.billed_duration == 8000
        assert rec.billed_cost == 1.6

    def test_illustrative_price_reproduces_point_two_usd(self):
        # 8 s at 1024 MB costs 0.2 USD when priced at 0.025 USD/GB-s
        suc = single_suc()
        platform = make_platform(suc, price=0.025, a=7800.0, b=0.0, c=200.0)
        dep = platform.deploy(policy_for(suc, 1024))
        _, rec = platform.invoke(dep.id, "f1", EVENT, 0)
        assert rec.billed_cost == 0.2

    def test_billed_cost_matches_invariant_formula(self):
        suc = single_suc()
        platform = make_platform(suc, noise_sigma=0.3, seed=11)
        config = platform.config
        dep = platform.deploy(policy_for(suc, 512))
        _, rec = platform.invoke(dep.id, "f1", EVENT, 0)
        expected = ((rec.memory_size / 1024) * (rec.billed_duration / 1000)
                    * config.price_per_gb_second + config.price_per_invocation)
        assert rec.billed_cost == expected

    def test_unknown_function_rejected(self):
        suc = single_suc()
        platform = make_platform(suc)
        dep = platform.deploy(policy_for(suc, 128))
        with pytest.raises(PlatformError, match="unknown function"):
            platform.invoke(dep.id, "ghost", EVENT, 0)

    def test_time_travel_rejected(self):
        suc = single_suc()
        platform = make_platform(suc)
        dep = platform.deploy(policy_for(suc, 128))
        platform.invoke(dep.id, "f1", EVENT, 10_000)
        with pytest.raises(PlatformError, match="time travel"):
            platform.invoke(dep.id, "f1", EVENT, 9_999)


class TestColdStarts:
    def test_keep_alive_expiry_forces_new_cold_start(self):
        suc = single_suc()
        platform = make_platform(suc, keep_alive=10_000,
                                 cold_start_extra=(0.0, 0.0, 400.0))
        dep = platform.deploy(policy_for(suc, 1024))
        _, first = platform.invoke(dep.id, "f1", EVENT, 0)
        _, second = platform.invoke(dep.id, "f1", EVENT, 5_000)
        _, third = platform.invoke(dep.id, "f1", EVENT, 60_000)
        assert first.cold_start and not second.cold_start and third.cold_start

    def test_cold_start_probability_emerges_from_slot_mechanics(self):
        # back-to-back events against one warm slot: exactly one cold start
        suc = single_suc()
        platform = make_platform(suc)
        dep = platform.deploy(policy_for(suc, 1024))
        records = [platform.invoke(dep.id, "f1", EVENT, t * 2_000)[1]
                   for t in range(10)]
        assert sum(r.cold_start for r in records) == 1

    def test_overlapping_events_need_separate_slots(self):
        suc = single_suc()
        platform = make_platform(suc)
        dep = platform.deploy(policy_for(suc, 1024))
        _, a = platform.invoke(dep.id, "f1", EVENT, 0)
        _, b = platform.invoke(dep.id, "f1", EVENT, 10)  # first still running
        assert a.cold_start and b.cold_start

    def test_slot_concurrency_two_shares_a_slot(self):
        suc = single_suc()
        gt = GroundTruth({("f1", "w"): GroundTruthEntry(1000.0, 0.002, 200.0)})
        config = PlatformConfig(slot_concurrency=2, deployment_convergence=(0, 0),
                                price_per_gb_second=0.2)
        platform = SimulatedPlatform(suc, config, gt)
        dep = platform.deploy(policy_for(suc, 1024))
        _, a = platform.invoke(dep.id, "f1", EVENT, 0)
        _, b = platform.invoke(dep.id, "f1", EVENT, 10)
        _, c = platform.invoke(dep.id, "f1", EVENT, 20)
        assert a.cold_start and not b.cold_start and c.cold_start


class TestDeployments:
    def test_zero_convergence_lag(self):
        suc = single_suc()
        platform = make_platform(suc, convergence=(0, 0))
        dep = platform.deploy(policy_for(suc, 128), at=1_000)
        assert dep.converged_at == dep.created_at == 1_000

    def test_convergence_lag_within_range(self):
        suc = single_suc()
        platform = make_platform(suc, convergence=(2_000, 6_000))
        lags = [platform.deploy(policy_for(suc, 128)).converged_at for _ in range(20)]
        assert all(2_000 <= lag <= 6_000 for lag in lags)

    def test_coexisting_deployments_serve_their_own_policies(self):
        suc = single_suc()
        platform = make_platform(suc)
        small = platform.deploy(policy_for(suc, 128))
        large = platform.deploy(policy_for(suc, 1024))
        _, rec_small = platform.invoke(small.id, "f1", EVENT, 0)
        _, rec_large = platform.invoke(large.id, "f1", EVENT, 0)
        assert rec_small.memory_size == 128
        assert rec_large.memory_size == 1024

    def test_inconsistent_window_serves_prior_policy(self):
        suc = single_suc()
        platform = make_platform(suc, convergence=(5_000, 5_000))
        first = platform.deploy(policy_for(suc, 128), at=0)
        platform.invoke(first.id, "f1", EVENT, 5_000)
        second = platform.deploy(policy_for(suc, 1024), at=10_000,
                                 update_of=first.id)
        _, during = platform.invoke(second.id, "f1", EVENT, 12_000)
        _, after = platform.invoke(second.id, "f1", EVENT, 20_000)
        assert during.memory_size == 128   # stale policy inside the window
        assert after.memory_size == 1024

    def test_unknown_deployment_rejected(self):
        platform = make_platform(single_suc())
        with pytest.raises(PlatformError, match="unknown deployment"):
            platform.invoke("d9999", "f1", EVENT, 0)

    def test_invalid_policy_rejected(self):
        suc = single_suc()
        platform = make_platform(suc)
        with pytest.raises(PlatformError, match="invalid policy"):
            platform.deploy(Policy({"ghost": {"Memory": 128}}))


class TestThrottling:
    def test_concurrency_limit_enforced(self):
        suc = single_suc()
        platform = make_platform(suc, max_concurrent=2)
        dep = platform.deploy(policy_for(suc, 1024))
        recs = [platform.invoke(dep.id, "f1", EVENT, 0)[1] for _ in range(3)]
        assert [r.throttled for r in recs] == [False, False, True]
        # after the first two finish, capacity frees up
        _, later = platform.invoke(dep.id, "f1", EVENT, 10_000)
        assert not later.throttled

    def test_at_most_limit_overlapping_executions(self):
        suc = single_suc()
        platform = make_platform(suc, max_concurrent=3)
        dep = platform.deploy(policy_for(suc, 128))
        accepted = 0
        for i in range(10):
            _, rec = platform.invoke(dep.id, "f1", EVENT, i)  # all overlap
            accepted += not rec.throttled
        assert accepted == 3


class TestDeterminism:
    def test_identical_setup_gives_bit_identical_telemetry(self):
        suc = chain_suc(2)

        def run():
            platform = make_platform(suc, noise_sigma=0.2, seed=42,
                                     base_failure_rate=0.1)
            dep = platform.deploy(policy_for(suc, 512))
            for i in range(30):
                platform.invoke(dep.id, "f1" if i % 2 else "f2", EVENT,
                                i * 1_000)
            return platform.telemetry_jsonl()

        assert run() == run()

    def test_noise_stream_keyed_by_occurrence_not_global_order(self):
        suc = chain_suc(2)
        platform_a = make_platform(suc, noise_sigma=0.2, seed=7)
        platform_b = make_platform(suc, noise_sigma=0.2, seed=7)
        dep_a = platform_a.deploy(policy_for(suc, 512))
        dep_b = platform_b.deploy(policy_for(suc, 512))
        # interleave differently; per-(function, size) draws must match
        a1 = platform_a.invoke(dep_a.id, "f1", EVENT, 0)[0].elat_ms
        a2 = platform_a.invoke(dep_a.id, "f2", EVENT, 10_000)[0].elat_ms
        b2 = platform_b.invoke(dep_b.id, "f2", EVENT, 0)[0].elat_ms
        b1 = platform_b.invoke(dep_b.id, "f1", EVENT, 10_000)[0].elat_ms
        assert a1 == b1 and a2 == b2

    def test_telemetry_jsonl_one_record_per_line(self):
        suc = single_suc()
        platform = make_platform(suc)
        dep = platform.deploy(policy_for(suc, 128))
        platform.invoke(dep.id, "f1", EVENT, 0)
        platform.invoke(dep.id, "f1", EVENT, 5_000)
        lines = platform.telemetry_jsonl().strip().split("\n")
        assert len(lines) == 2
        parsed = json.loads(lines[0])
        assert set(parsed) == {"billed_duration", "memory_size", "cold_start",
                               "billed_cost", "throttled", "failed"}


class TestMonotonicity:
    @given(a=st.floats(10.0, 5_000.0), b=st.floats(1e-5, 0.02),
           c=st.floats(0.0, 1_000.0))
    @settings(max_examples=40, deadline=None)
    def test_warm_latency_non_increasing_in_memory(self, a, b, c):
        suc = single_suc(tuple(range(128, 4097, 128)))
        platform = make_platform(suc, a=a, b=b, c=c)
        elats = []
        for i, memory in enumerate(suc.functions[0].memory_domain):
            dep = platform.deploy(policy_for(suc, memory),
                                  at=platform.clock_ms)
            t = platform.clock_ms + 10_000 * (i + 1)
            platform.invoke(dep.id, "f1", EVENT, t)  # cold
            res, _ = platform.invoke(dep.id, "f1", EVENT, t + 8_000)
            elats.append(res.elat_ms)
        assert all(y <= x + 1e-9 for x, y in zip(elats, elats[1:]))


class TestWorkBasedBilling:
    def test_total_cost_independent_of_parallelism(self):
        suc = single_suc()

        def total(parallel):
            platform = make_platform(suc, noise_sigma=0.1, seed=5)
            deps = [platform.deploy(policy_for(suc, m)) for m in (128, 1024)]
            if parallel:
                for i in range(10):
                    for dep in deps:
                        platform.invoke(dep.id, "f1", EVENT, i * 2_000)
            else:
                t = 0
                for dep in deps:
                    for i in range(10):
                        platform.invoke(dep.id, "f1", EVENT, t)
                        t += 2_000
            return platform.total_billed_cost()

        assert total(parallel=True) == pytest.approx(total(parallel=False),
                                                     abs=1e-12)


class TestOracle:
    def test_single_function_matches_closed_form(self):
        suc = single_suc()
        platform = make_platform(suc)
        qualities = platform.oracle_qualities(policy_for(suc, 1024), "w")
        assert qualities[QualityKind.ELAT] == pytest.approx(
            1000.0 * math.exp(-2.048) + 200.0, rel=1e-12)

    def test_chain_latency_is_sum(self):
        suc = chain_suc(2)
        platform = make_platform(suc)
        single = 1000.0 * math.exp(-2.048) + 200.0
        qualities = platform.oracle_qualities(policy_for(suc, 1024), "w")
        assert qualities[QualityKind.ELAT] == pytest.approx(2 * single, rel=1e-12)

    def test_chain_reliability_is_product(self):
        suc = chain_suc(2)
        gt = GroundTruth({
            ("f1", "w"): GroundTruthEntry(100.0, 0.0, 0.0, base_failure_rate=0.01),
            ("f2", "w"): GroundTruthEntry(100.0, 0.0, 0.0, base_failure_rate=0.02)})
        platform = make_platform(suc, ground_truth=gt)
        qualities = platform.oracle_qualities(policy_for(suc, 512), "w")
        assert qualities[QualityKind.RELIABILITY] == pytest.approx(
            0.99 * 0.98, rel=1e-12)

    def test_unknown_workload_class_rejected(self):
        platform = make_platform(single_suc())
        with pytest.raises(PlatformError, match="no ground truth"):
            platform.oracle_qualities(policy_for(single_suc(), 128), "ghost")
