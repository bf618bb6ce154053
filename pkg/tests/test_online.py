import itertools

import numpy as np
import pytest
from hypothesis import given

from spatialmatch import (
    ArrivalOrder,
    CostModel,
    MarketInstance,
    PreconditionError,
    arrival_order,
    greedy_match,
    max_adjacent_gap,
    omniscient_match,
    run_online,
    sample_instance,
    worst_case_order,
)
from spatialmatch._kernels import TIE_RTOL
from spatialmatch.online import write_trace_csv

from conftest import instances, random_instances


def order(*perm):
    return ArrivalOrder(list(perm))


def test_greedy_two_pairs_orders(two_pairs):
    out = greedy_match(two_pairs, order(0, 1))
    assert out.matching.driver_of().tolist() == [1, 0]
    assert out.total_distance == 7.0
    out = greedy_match(two_pairs, order(1, 0))
    assert out.matching.driver_of().tolist() == [0, 1]
    assert out.total_distance == 4.0


def test_greedy_tie_goes_left():
    inst = MarketInstance([0.5], [0.7, 0.3], 1.0)
    assert greedy_match(inst, order(0)).matching.driver_of().tolist() == [1]
    inst = MarketInstance([0.5], [0.75, 0.25], 1.0)
    assert greedy_match(inst, order(0)).matching.driver_of().tolist() == [1]


def test_greedy_near_tie_outside_tolerance_goes_nearest():
    inst = MarketInstance([0.5], [0.7, 0.3 - 1e-9], 1.0)
    assert greedy_match(inst, order(0)).matching.driver_of().tolist() == [0]


def test_greedy_coincident_drivers_lowest_index():
    inst = MarketInstance([1 / 6], [0.0, 0.0], 1.0)
    assert greedy_match(inst, order(0)).matching.driver_of().tolist() == [0]
    inst = MarketInstance([0.9], [1.0, 1.0], 1.0)
    assert greedy_match(inst, order(0)).matching.driver_of().tolist() == [0]


def test_greedy_tie_between_coincident_drivers():
    inst = MarketInstance([0.5, 0.5], [0.5, 0.5], 1.0)
    out = greedy_match(inst, order(1, 0))
    assert out.decision_trace == ((1, 1, 0), (2, 0, 1))


def test_greedy_needs_supply():
    with pytest.raises(PreconditionError):
        greedy_match(MarketInstance([0.1, 0.2], [0.3], 1.0), order(0, 1))


def test_greedy_trace_shape():
    inst = sample_instance(30, 40, seed=3)
    out = greedy_match(inst, arrival_order(inst, "random", seed=1))
    assert len(out.decision_trace) == 30
    assert [t[0] for t in out.decision_trace] == list(range(1, 31))
    drivers = [t[2] for t in out.decision_trace]
    assert None not in drivers and len(set(drivers)) == 30
    assert np.all(out.waited_periods == 0)


def naive_greedy(inst, perm):
    free = list(range(inst.m))
    chosen = []
    for r in perm:
        x = inst.riders[r]
        dmin = min(abs(inst.drivers[j] - x) for j in free)
        near = [j for j in free if abs(inst.drivers[j] - x) - dmin <= TIE_RTOL * max(x, inst.drivers[j])]
        best = min(near, key=lambda j: (inst.drivers[j], j))
        free.remove(best)
        chosen.append(best)
    return chosen


@given(instances(max_riders=8, max_drivers=10, grid=6))
def test_greedy_matches_naive_scan(inst):
    if inst.m < inst.n:
        return
    perm = list(range(inst.n))[::-1]
    out = greedy_match(inst, ArrivalOrder(perm))
    assert [t[2] for t in out.decision_trace] == naive_greedy(inst, perm)


def test_greedy_per_step_optimality():
    for inst in random_instances(100, n_max=20, m_max=30):
        out = greedy_match(inst, arrival_order(inst, "random", seed=2))
        free = set(range(inst.m))
        for _, r, d in out.decision_trace:
            dist = abs(inst.riders[r] - inst.drivers[d])
            assert all(dist <= abs(inst.riders[r] - inst.drivers[j]) + 1e-15 for j in free)
            free.remove(d)


def test_greedy_dominates_omniscient():
    for inst in random_instances(300, n_max=10, m_max=14):
        opt = omniscient_match(inst).total_distance
        for strategy in ("random", "ascending", "descending", "as-sampled"):
            out = greedy_match(inst, arrival_order(inst, strategy, seed=5))
            assert out.total_distance >= opt - 1e-12


def test_greedy_large_run():
    inst = sample_instance(10**5, 12 * 10**4, seed=0)
    out = greedy_match(inst, arrival_order(inst, "random", seed=0))
    assert len(out.matching) == 10**5


def test_worst_case_two_pairs(two_pairs):
    best, cost = worst_case_order(two_pairs)
    assert best.permutation.tolist() == [0, 1]
    assert cost == 7.0
    assert best.strategy == "exhaustive-worst"


def test_worst_case_singleton():
    best, _ = worst_case_order(MarketInstance([0.3], [0.1, 0.9], 1.0))
    assert best.permutation.tolist() == [0]


def test_worst_case_cap():
    with pytest.raises(PreconditionError):
        worst_case_order(sample_instance(9, 9, seed=0))


def test_worst_case_dominates_fixed_strategies():
    for inst in random_instances(60, n_max=6, m_max=8):
        _, worst = worst_case_order(inst)
        for strategy in ("random", "ascending", "descending", "as-sampled"):
            assert worst >= greedy_match(inst, arrival_order(inst, strategy, seed=1)).total_distance


def test_worst_case_is_exhaustive_maximum():
    inst = sample_instance(5, 6, seed=12)
    best, cost = worst_case_order(inst)
    costs = [greedy_match(inst, ArrivalOrder(p)).total_distance for p in itertools.permutations(range(5))]
    assert cost == max(costs)
    first = next(p for p, c in zip(itertools.permutations(range(5)), costs) if c == cost)
    assert best.permutation.tolist() == list(first)


def test_arrival_order_worst_strategy(two_pairs):
    assert arrival_order(two_pairs, "exhaustive-worst").permutation.tolist() == [0, 1]


def nth_nearest_bound(inst):
    """Sum over riders of the distance to their n-th nearest driver."""
    d = np.abs(inst.riders[:, None] - inst.drivers[None, :])
    return np.sort(d, axis=1)[:, inst.n - 1].sum()


def test_worst_case_within_provable_bound():
    # at most n - 1 drivers are taken before any rider arrives, so its
    # greedy driver is no farther than its n-th nearest driver
    for n in range(1, 7):
        for seed in range(200):
            inst = sample_instance(n, n + 2, seed=seed)
            _, cost = worst_case_order(inst)
            assert cost <= nth_nearest_bound(inst) + 1e-12


def test_worst_case_can_exceed_gap_times_n():
    inst = sample_instance(6, 8, seed=172)
    _, cost = worst_case_order(inst)
    assert cost > max_adjacent_gap(inst) * 6


def test_replay_two_pairs(two_pairs):
    for perm in ([0, 1], [1, 0]):
        out = run_online(two_pairs, ArrivalOrder(perm), "omniscient-replay")
        assert out.total_cost == 4.0
        assert np.all(out.waited_periods == 0)


def test_replay_order_invariant():
    for inst in random_instances(100, n_max=8, m_max=10):
        if inst.n == 0:
            continue
        ref = run_online(inst, arrival_order(inst, "as-sampled"), "omniscient-replay")
        for seed in range(3):
            out = run_online(inst, arrival_order(inst, "random", seed=seed), "omniscient-replay")
            assert out.matching.same_pairs(ref.matching)
            assert out.total_distance == omniscient_match(inst).total_distance


def test_greedy_ignores_waiting_cost(two_pairs):
    a = run_online(two_pairs, order(0, 1), "greedy", CostModel(0.0))
    b = run_online(two_pairs, order(0, 1), "greedy", CostModel(5.0))
    assert a.total_cost == b.total_cost == 7.0


def test_run_online_unknown_algorithm(two_pairs):
    with pytest.raises(ValueError):
        run_online(two_pairs, order(0, 1), "patient")


def test_trace_csv(tmp_path, two_pairs):
    out = greedy_match(two_pairs, order(0, 1))
    path = tmp_path / "trace.csv"
    write_trace_csv(out, two_pairs, path)
    lines = path.read_text().splitlines()
    assert lines == [
        "period,rider_index,action,driver_index,distance",
        "1,0,match,1,1.5",
        "2,1,match,0,5.5",
    ]
