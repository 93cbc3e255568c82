import pytest

from faas_sizer import (
    Bound,
    CompositionSpec,
    FunctionRef,
    FunctionSpec,
    GoalSpec,
    GroundTruth,
    GroundTruthEntry,
    KnobKind,
    KnobSpec,
    PlatformConfig,
    QualityKind,
    Sequence,
    SimulatedPlatform,
    SystemUnderConfiguration,
    WorkloadClass,
    WorkloadModel,
)

SMALL_DOMAIN = (128, 256, 512, 1024)


def chain_suc(n_functions=3, domain=SMALL_DOMAIN, name="chain"):
    functions = [FunctionSpec(f"f{i + 1}", [KnobSpec(KnobKind.MEMORY, domain)])
                 for i in range(n_functions)]
    composition = CompositionSpec(
        Sequence(tuple(FunctionRef(f.name) for f in functions)))
    return SystemUnderConfiguration(tuple(functions), composition, name)


def single_suc(domain=SMALL_DOMAIN, name="single"):
    fn = FunctionSpec("f1", [KnobSpec(KnobKind.MEMORY, domain)])
    return SystemUnderConfiguration((fn,), CompositionSpec(FunctionRef("f1")),
                                    name)


def make_platform(suc, *, ground_truth=None, seed=0, convergence=(0, 0),
                  price=0.2, keep_alive=300_000, max_concurrent=100,
                  **gt_kwargs):
    if ground_truth is None:
        classes = gt_kwargs.pop("classes", ["w"])
        entry = GroundTruthEntry(**({"a": 1000.0, "b": 0.002, "c": 200.0}
                                    | gt_kwargs))
        ground_truth = GroundTruth({(fn, wc): entry
                                    for fn in suc.function_names
                                    for wc in classes})
    config = PlatformConfig(deployment_convergence=convergence,
                            price_per_gb_second=price, rng_seed=seed,
                            keep_alive=keep_alive,
                            max_concurrent_executions=max_concurrent)
    return SimulatedPlatform(suc, config, ground_truth)


@pytest.fixture
def small_chain():
    return chain_suc()


@pytest.fixture
def single_function_suc():
    return single_suc()


@pytest.fixture
def workload_w():
    return WorkloadModel((WorkloadClass("w", 1.0, "payload-w"),),
                         target_rate=2.0)


def latency_cost_goal(w_lat=0.5, w_cost=0.5, bounds=()):
    return GoalSpec(bounds=tuple(bounds),
                    weights={QualityKind.ELAT: w_lat, QualityKind.ECOST: w_cost})


def elat_bound(threshold, op="<="):
    return Bound(QualityKind.ELAT, op, threshold)
