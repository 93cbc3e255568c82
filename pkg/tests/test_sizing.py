import itertools
import math

import pytest

from faas_sizer import (
    AnnealSchedule,
    Bound,
    CostParams,
    FunctionRef,
    GoalSpec,
    Parallel,
    Policy,
    QualityKind,
    Sequence,
    SizingRequest,
    Switch,
    TacticConfig,
    ValidationError,
    aggregate_composition,
    anneal_match,
    brute_force_match,
    enumerate_policies,
    filter_bounds,
    zf_score,
)
from faas_sizer.modeling import FitDiagnostics, QualityModel
from faas_sizer.sizing import (
    FunctionQualityTable,
    ZFScorer,
    analytic_normalizers,
    build_quality_tables,
    candidate_normalizers,
)

from conftest import chain_suc, single_suc

E = QualityKind.ELAT
R = QualityKind.RLAT
C = QualityKind.ECOST
REL = QualityKind.RELIABILITY


def model_for(fn, a=1000.0, b=0.002, c=200.0, price=0.2):
    return QualityModel(fn, "w", (a, b, c),
                        FitDiagnostics(0.0, 5, ()), CostParams(price))


def tables_for(suc, **model_kwargs):
    models = {(fn, "w"): model_for(fn, **model_kwargs)
              for fn in suc.function_names}
    return build_quality_tables(suc, models, {"w": 1.0})


class TestZfScore:
    def test_two_request_hand_check(self):
        requests = [{E: 100.0, C: 0.1}, {E: 200.0, C: 0.2}]
        weights = {E: 0.5, C: 0.5}
        # by hand: (1/2) * [(0.25 + 0.25) + (0.5 + 0.5)] = 0.75
        assert zf_score(requests, weights) == 0.75

    def test_single_request_scores_weight_sum(self):
        requests = [{E: 123.0, C: 0.05}]
        assert zf_score(requests, {E: 0.5, C: 0.5}) == 1.0

    def test_scaling_one_quality_leaves_score_unchanged(self):
        base = [{E: 100.0, C: 0.1}, {E: 200.0, C: 0.2}]
        scaled = [{E: 10 * r[E], C: r[C]} for r in base]
        weights = {E: 0.5, C: 0.5}
        assert zf_score(scaled, weights) == zf_score(base, weights)

    def test_all_zero_quality_contributes_nothing(self):
        requests = [{E: 0.0, C: 0.1}, {E: 0.0, C: 0.2}]
        assert zf_score(requests, {E: 0.5, C: 0.5}) == \
            zf_score(requests, {C: 0.5})

    def test_empty_request_set_rejected(self):
        with pytest.raises(ValidationError, match="empty"):
            zf_score([], {E: 1.0})

    def test_scaling_never_changes_ranking(self):
        candidates = [{E: float(e), C: c} for e, c in
                      [(100, 0.3), (400, 0.1), (250, 0.2)]]
        weights = {E: 0.6, C: 0.4}

        def ranking(cands):
            norms = candidate_normalizers(cands, weights)
            scorer = ZFScorer(weights, norms)
            return sorted(range(len(cands)), key=lambda i: scorer.score(cands[i]))

        scaled = [{E: 7.0 * q[E], C: q[C]} for q in candidates]
        assert ranking(candidates) == ranking(scaled)


class TestFilterBounds:
    def test_rlat_900ms_bound(self):
        bound = Bound(R, "<=", 900.0)
        candidates = [(Policy({"f": {"Memory": 1024}}), {R: 800.0}),
                      (Policy({"f": {"Memory": 128}}), {R: 1000.0})]
        kept = filter_bounds(candidates, (bound,))
        assert len(kept) == 1 and kept[0][1][R] == 800.0

    def test_no_bounds_is_identity(self):
        candidates = [(Policy({}), {R: 1000.0})]
        assert filter_bounds(candidates, ()) == candidates

    def test_joint_latency_and_cost_bounds(self):
        # latency below 90 s and cost below 0.1 USD, applied jointly
        bounds = (Bound(R, "<=", 90_000.0), Bound(C, "<=", 0.1))
        candidates = [
            (Policy({"f": {"Memory": 128}}), {R: 95_000.0, C: 0.05}),
            (Policy({"f": {"Memory": 512}}), {R: 60_000.0, C: 0.12}),
            (Policy({"f": {"Memory": 1024}}), {R: 45_000.0, C: 0.08}),
        ]
        kept = filter_bounds(candidates, bounds)
        assert [p.memory_of("f") for p, _ in kept] == [1024]

    def test_bound_on_unpredicted_quality_rejected(self):
        with pytest.raises(ValidationError, match="no prediction"):
            filter_bounds([(Policy({}), {R: 1.0})], (Bound(C, "<=", 1.0),))


class TestAggregateComposition:
    PF = {"a": {E: 3000.0, C: 0.01, REL: 0.99},
          "b": {E: 5000.0, C: 0.02, REL: 0.98}}

    def test_sequence_sums_latency(self):
        node = Sequence((FunctionRef("a"), FunctionRef("b")))
        agg = aggregate_composition(node, self.PF)
        assert agg[E] == 8000.0
        assert agg[C] == pytest.approx(0.03)

    def test_parallel_takes_max_latency_but_sums_cost(self):
        node = Parallel((FunctionRef("a"), FunctionRef("b")))
        agg = aggregate_composition(node, self.PF)
        assert agg[E] == 5000.0
        assert agg[C] == pytest.approx(0.03)

    def test_reliability_is_product(self):
        node = Sequence((FunctionRef("a"), FunctionRef("b")))
        agg = aggregate_composition(node, self.PF)
        assert agg[REL] == pytest.approx(0.99 * 0.98, rel=1e-12)

    def test_switch_is_expectation(self):
        node = Switch(((0.25, FunctionRef("a")), (0.75, FunctionRef("b"))))
        agg = aggregate_composition(node, self.PF)
        assert agg[E] == pytest.approx(0.25 * 3000 + 0.75 * 5000)
        assert agg[REL] == pytest.approx(0.25 * 0.99 + 0.75 * 0.98)

    def test_dangling_ref_rejected(self):
        with pytest.raises(ValidationError, match="dangling"):
            aggregate_composition(FunctionRef("ghost"), self.PF)

    def test_throughput_never_aggregated(self):
        pf = {"a": {E: 1.0, QualityKind.THROUGHPUT: 10.0},
              "b": {E: 2.0, QualityKind.THROUGHPUT: 20.0}}
        agg = aggregate_composition(Sequence((FunctionRef("a"),
                                              FunctionRef("b"))), pf)
        assert QualityKind.THROUGHPUT not in agg


def predict_from_tables(suc, tables, overhead=0.0):
    index = {fn: {s: i for i, s in enumerate(t.sizes)}
             for fn, t in tables.items()}

    def predict(policy):
        per_function = {fn: tables[fn].qualities[index[fn][policy.memory_of(fn)]]
                        for fn in tables}
        agg = aggregate_composition(suc.composition.root, per_function)
        agg[R] = agg[E] + overhead
        return agg

    return predict


class TestBruteForce:
    def test_largest_size_wins_on_pure_latency(self):
        suc = single_suc()
        tables = tables_for(suc)
        goal = GoalSpec(weights={E: 1.0})
        result = brute_force_match(enumerate_policies(suc), goal,
                                   predict_from_tables(suc, tables))
        assert result.policy.memory_of("f1") == 1024

    def test_all_infeasible_marks_result_with_nearest_miss(self):
        suc = single_suc()
        tables = tables_for(suc)
        goal = GoalSpec(bounds=(Bound(E, "<=", 1.0),), weights={E: 1.0})
        result = brute_force_match(enumerate_policies(suc), goal,
                                   predict_from_tables(suc, tables))
        assert result.infeasible
        assert result.nearest_miss["violated_bounds"] == ["ELat<=1.0ms"]
        # nearest miss is the least-violating candidate: the largest size
        assert result.nearest_miss["policy"]["assignments"]["f1"]["Memory"] == 1024

    def test_three_function_chain_matches_independent_enumeration(self):
        suc = chain_suc(3)
        tables = tables_for(suc)
        goal = GoalSpec(bounds=(Bound(E, "<=", 2200.0),),
                        weights={E: 0.5, C: 0.5})
        predict = predict_from_tables(suc, tables)
        result = brute_force_match(enumerate_policies(suc), goal, predict)

        # independent oracle: straight loops over the joint space
        domain = suc.functions[0].memory_domain
        elat = {m: 1000.0 * math.exp(-0.002 * m) + 200.0 for m in domain}
        cost = {m: (m / 1024) * (math.ceil(elat[m]) / 1000) * 0.2
                for m in domain}
        combos = list(itertools.product(domain, repeat=3))
        agg = {combo: (sum(elat[m] for m in combo), sum(cost[m] for m in combo))
               for combo in combos}
        max_e = max(v[0] for v in agg.values())
        max_c = max(v[1] for v in agg.values())
        feasible = [k for k, v in agg.items() if v[0] <= 2200.0]
        best = min(feasible, key=lambda k: (0.5 * agg[k][0] / max_e
                                            + 0.5 * agg[k][1] / max_c, sum(k)))
        assert tuple(result.policy.memory_of(f"f{i+1}") for i in range(3)) == best

    def test_cap_enforced(self):
        from faas_sizer import CapExceededError
        suc = chain_suc(2)
        tables = tables_for(suc)
        with pytest.raises(CapExceededError):
            brute_force_match(enumerate_policies(suc), GoalSpec(weights={E: 1.0}),
                              predict_from_tables(suc, tables), cap=3)

    def test_pareto_front_sorted_by_score_and_non_dominated(self):
        suc = single_suc()
        tables = tables_for(suc)
        goal = GoalSpec(weights={E: 0.5, C: 0.5})
        result = brute_force_match(enumerate_policies(suc), goal,
                                   predict_from_tables(suc, tables))
        zfs = [z for _, _, z in result.pareto_front]
        assert zfs == sorted(zfs)
        assert result.pareto_front  # non-empty
        for _, q1, _ in result.pareto_front:
            assert not any(q2[E] <= q1[E] and q2[C] <= q1[C]
                           and (q2[E] < q1[E] or q2[C] < q1[C])
                           for _, q2, _ in result.pareto_front)


class TestAnneal:
    def test_single_function_space_equals_domain_scan(self):
        suc = single_suc()
        tables = tables_for(suc)
        goal = GoalSpec(weights={E: 0.7, C: 0.3})
        result = anneal_match(suc, goal, tables, seed=4)
        scan = brute_force_match(enumerate_policies(suc), goal,
                                 predict_from_tables(suc, tables),
                                 normalizers=analytic_normalizers(
                                     suc, tables, (E, C)))
        assert result.policy == scan.policy
        assert result.zf_score == pytest.approx(scan.zf_score, abs=1e-12)

    def test_deterministic_given_seed(self):
        suc = chain_suc(3)
        tables = tables_for(suc)
        goal = GoalSpec(weights={E: 0.5, C: 0.5})
        a = anneal_match(suc, goal, tables, seed=11)
        b = anneal_match(suc, goal, tables, seed=11)
        assert a.policy == b.policy
        assert a.zf_score == b.zf_score
        assert a.search_stats == b.search_stats

    def test_zero_budget_returns_initial_state_unoptimized(self):
        suc = single_suc()
        tables = tables_for(suc)
        goal = GoalSpec(bounds=(Bound(E, "<=", 1.0),), weights={E: 1.0})
        schedule = AnnealSchedule(t0=1e-6, t_floor=1.0)  # no temperature steps
        result = anneal_match(suc, goal, tables, schedule, seed=2)
        assert result.search_stats["iterations"] == 0
        assert result.infeasible
        assert "unoptimized" in result.provenance["notes"]

    def test_infeasible_bounds_return_nearest_miss(self):
        suc = single_suc()
        tables = tables_for(suc)
        goal = GoalSpec(bounds=(Bound(E, "<=", 1.0),), weights={E: 1.0})
        result = anneal_match(suc, goal, tables, seed=0)
        assert result.infeasible and result.nearest_miss is not None


class TestDecompositionSoundness:
    def test_chain_search_equals_joint_brute_force(self):
        # exact models: per-function tables + aggregation vs joint enumeration
        for n in (2, 3):
            suc = chain_suc(n)
            tables = tables_for(suc)
            goal = GoalSpec(weights={E: 0.5, C: 0.5},
                            bounds=(Bound(E, "<=", 2500.0),))
            predict = predict_from_tables(suc, tables)
            joint = brute_force_match(enumerate_policies(suc), goal, predict)
            annealed = anneal_match(suc, goal, tables, seed=5,
                                    normalizers=analytic_normalizers(
                                        suc, tables, (E, C)))
            assert annealed.zf_score == pytest.approx(joint.zf_score, abs=1e-9)

    def test_analytic_normalizers_equal_candidate_maxima(self):
        suc = chain_suc(3)
        tables = tables_for(suc)
        predict = predict_from_tables(suc, tables)
        predictions = [predict(p) for p in enumerate_policies(suc)]
        explicit = candidate_normalizers(predictions, (E, C, REL))
        analytic = analytic_normalizers(suc, tables, (E, C, REL))
        for kind in (E, C, REL):
            assert analytic[kind] == pytest.approx(explicit[kind], rel=1e-12)


class TestSizingRequest:
    def _goal(self):
        return GoalSpec(weights={E: 1.0})

    def test_valid_request(self):
        request = SizingRequest({"suc": "registered"}, self._goal(),
                                TacticConfig())
        assert request.validate() == []

    def test_target_must_be_exactly_one_kind(self):
        request = SizingRequest({}, self._goal(), TacticConfig())
        assert any("exactly one" in p for p in request.validate())

    def test_model_target_requires_reuse(self):
        request = SizingRequest({"models": ["k"]}, self._goal(), TacticConfig())
        assert any("reuse_model" in p for p in request.validate())

    def test_round_trip(self):
        request = SizingRequest({"suc": "registered"}, self._goal(),
                                TacticConfig(reuse_model=True), None, True)
        assert SizingRequest.from_json(request.to_json()) == request
