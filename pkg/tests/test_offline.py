import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatialmatch import (
    CostModel,
    MarketInstance,
    Matching,
    PreconditionError,
    brute_force_match,
    diagnose_matching,
    matching_cost,
    nested_transform,
    omniscient_match,
    omniscient_match_with_penalty,
    sample_instance,
    sorted_match,
)
from spatialmatch import _kernels
from spatialmatch.offline import exact_distance, nesting_steps, read_matching_csv, write_matching_csv

from conftest import instances, random_instances

NUS = [0.0, 0.05, 0.2, 1.0]


def pair_set(matching, inst):
    return {
        (float(inst.riders[r]), float(inst.drivers[d])) for r, d in matching.pairs.tolist()
    }


def test_omniscient_three_drivers():
    inst = MarketInstance([0.2, 0.8], [0.1, 0.5, 0.9], 1.0)
    m = omniscient_match(inst)
    assert pair_set(m, inst) == {(0.2, 0.1), (0.8, 0.9)}
    assert m.total_distance == pytest.approx(0.2)


def test_omniscient_two_pairs(two_pairs):
    m = omniscient_match(two_pairs)
    assert pair_set(m, two_pairs) == {(3.0, 0.5), (6.0, 4.5)}
    assert m.total_distance == 4.0


def test_omniscient_empty():
    m = omniscient_match(MarketInstance([], [0.3], 1.0))
    assert len(m) == 0 and m.total_distance == 0.0


def test_omniscient_needs_supply():
    with pytest.raises(PreconditionError):
        omniscient_match(MarketInstance([0.1, 0.2], [0.3], 1.0))


def test_penalty_single_skip():
    m = omniscient_match_with_penalty(MarketInstance([0.2], [0.5], 1.0), 0.05)
    assert len(m) == 0 and m.unmatched_riders.tolist() == [0]
    assert m.total_cost == pytest.approx(0.05)


def test_penalty_skips_both():
    inst = MarketInstance([0.1, 0.9], [0.5, 0.55], 1.0)
    m = omniscient_match_with_penalty(inst, 0.2)
    assert m.unmatched_riders.tolist() == [0, 1]
    assert m.total_cost == pytest.approx(0.4)


def test_penalty_handles_short_supply():
    inst = MarketInstance([0.1, 0.5, 0.9], [0.45], 1.0)
    m = omniscient_match_with_penalty(inst, 0.3)
    assert m.pairs.tolist() == [[1, 0]]
    assert m.total_cost == pytest.approx(0.05 + 0.6)


def test_penalty_rejects_negative_nu():
    with pytest.raises(ValueError):
        omniscient_match_with_penalty(MarketInstance([0.1], [0.2], 1.0), -1.0)


def test_large_nu_reproduces_omniscient():
    for inst in random_instances(200, n_max=12, m_max=16):
        a = omniscient_match(inst)
        b = omniscient_match_with_penalty(inst, inst.ell)
        assert b.unmatched_riders.size == 0
        assert b.total_distance == pytest.approx(a.total_distance, rel=1e-12, abs=1e-15)
        assert a.same_pairs(b)


def test_sorted_examples():
    inst = MarketInstance([0.8, 0.2], [0.9, 0.1], 1.0)
    m = sorted_match(inst)
    assert m.pairs.tolist() == [[0, 0], [1, 1]]
    assert m.total_distance == pytest.approx(0.2)
    assert sorted_match(MarketInstance([0.4], [0.7], 1.0)).total_distance == pytest.approx(0.3)
    with pytest.raises(PreconditionError):
        sorted_match(MarketInstance([0.4], [0.7, 0.1], 1.0))


def test_sorted_equals_brute_force_balanced():
    for inst in random_instances(500, balanced=True):
        assert sorted_match(inst).total_distance == pytest.approx(
            brute_force_match(inst).total_distance, rel=1e-12, abs=1e-15
        )


def test_brute_force_examples():
    inst = MarketInstance([0.4], [0.1], 1.0)
    assert brute_force_match(inst).pairs.tolist() == [[0, 0]]
    skip = brute_force_match(inst, nu=0.1)
    assert skip.unmatched_riders.tolist() == [0]
    inst = MarketInstance([0.2, 0.8], [0.1, 0.5, 0.9], 1.0)
    assert brute_force_match(inst).total_distance == pytest.approx(0.2)


def test_brute_force_caps():
    with pytest.raises(PreconditionError):
        brute_force_match(sample_instance(8, 9, seed=0))
    with pytest.raises(PreconditionError):
        brute_force_match(sample_instance(3, 10, seed=0))
    with pytest.raises(PreconditionError):
        brute_force_match(sample_instance(3, 2, seed=0))


@given(instances(min_extra=0))
def test_omniscient_equals_brute_force(inst):
    if inst.m < inst.n:
        return
    assert omniscient_match(inst).total_distance == pytest.approx(
        brute_force_match(inst).total_distance, rel=1e-9, abs=1e-12
    )


@given(instances(max_riders=5, max_drivers=6, grid=4), st.sampled_from(NUS))
def test_penalty_equals_brute_force_with_ties(inst, nu):
    dp = omniscient_match_with_penalty(inst, nu)
    bf = brute_force_match(inst, nu)
    assert dp.total_cost == pytest.approx(bf.total_cost, rel=1e-9, abs=1e-12)
    # skipping every rider is always feasible
    assert dp.total_cost <= nu * inst.n + 1e-12


@given(instances(max_riders=6, max_drivers=8, grid=5))
def test_brute_force_never_below_dp(inst):
    if inst.m < inst.n:
        return
    bf = brute_force_match(inst).total_distance
    assert bf >= omniscient_match(inst).total_distance - 1e-12


def test_checkpointed_backtrack_matches_full_table():
    for seed in range(10):
        inst = sample_instance(57, 70, seed=seed)
        full = omniscient_match(inst)
        small = omniscient_match(inst, _cell_budget=50)
        assert full.same_pairs(small)
        assert full.total_distance == small.total_distance
        pen = omniscient_match_with_penalty(inst, 0.02)
        pen_small = omniscient_match_with_penalty(inst, 0.02, _cell_budget=50)
        assert pen.same_pairs(pen_small)


def test_large_instance_consistency():
    inst = sample_instance(2000, 2400, seed=5)
    m = omniscient_match(inst)
    assert len(m) == 2000
    rs, ds = np.sort(inst.riders), np.sort(inst.drivers)
    assert m.total_distance == pytest.approx(_kernels.band_cost(rs, ds), rel=1e-10)
    pen = omniscient_match_with_penalty(inst, 1.0)
    assert pen.total_distance == pytest.approx(m.total_distance, rel=1e-10)


def test_balanced_band_is_sorted_matching():
    inst = sample_instance(500, 500, seed=2)
    assert omniscient_match(inst).same_pairs(sorted_match(inst))


def test_optimal_matchings_orientation_consistent():
    for inst in random_instances(300, n_max=7, m_max=9):
        assert diagnose_matching(omniscient_match(inst), inst).orientation_consistent
        for nu in (0.05, 0.2):
            assert diagnose_matching(omniscient_match_with_penalty(inst, nu), inst).orientation_consistent


def test_diagnostics_examples():
    inst = MarketInstance([1, 2], [3, 4], 5.0)
    entwined = Matching.from_pairs(inst, [(0, 0), (1, 1)])
    d = diagnose_matching(entwined, inst)
    assert d.entwined_pair_count == 1 and not d.is_nested
    nested = Matching.from_pairs(inst, [(0, 1), (1, 0)])
    assert diagnose_matching(nested, inst).is_nested


def test_nested_transform_example():
    inst = MarketInstance([1, 2], [3, 4], 5.0)
    out = nested_transform(Matching.from_pairs(inst, [(0, 0), (1, 1)]), inst)
    assert out.pairs.tolist() == [[0, 1], [1, 0]]
    assert out.total_distance == 4.0


def test_nested_transform_fixed_point():
    inst = MarketInstance([1, 2], [3, 4], 5.0)
    nested = Matching.from_pairs(inst, [(0, 1), (1, 0)])
    assert nested_transform(nested, inst) is nested


def test_nested_transform_leftward():
    inst = MarketInstance([3, 4], [1, 2], 5.0)
    out = nested_transform(Matching.from_pairs(inst, [(0, 0), (1, 1)]), inst)
    assert diagnose_matching(out, inst).is_nested
    assert out.total_distance == 4.0


def test_nested_transform_rejects_opposite_orientation():
    inst = MarketInstance([0.1, 0.6], [0.5, 0.2], 1.0)
    m = Matching.from_pairs(inst, [(0, 0), (1, 1)])
    assert not diagnose_matching(m, inst).orientation_consistent
    with pytest.raises(ValueError):
        nested_transform(m, inst)


def consistent_random_matching(inst, rng, attempts=500):
    for _ in range(attempts):
        perm = rng.permutation(inst.m)[: inst.n]
        m = Matching.from_pairs(inst, np.column_stack((np.arange(inst.n), perm)))
        if diagnose_matching(m, inst).orientation_consistent:
            return m
    return None


def test_nested_transform_random_sweep():
    rng = np.random.default_rng(0)
    checked = 0
    for inst in random_instances(200, n_max=6, m_max=8, seed=3):
        m = consistent_random_matching(inst, rng)
        if m is None:
            continue
        out = nested_transform(m, inst)
        assert diagnose_matching(out, inst).is_nested
        assert out.total_distance == m.total_distance
        assert out.n == m.n and len(out) == len(m)
        checked += 1
    assert checked >= 150


def test_nesting_steps_reduce_entwinement_to_zero():
    inst = MarketInstance([0.0, 0.1, 0.2, 0.3], [0.4, 0.5, 0.6, 0.7], 1.0)
    m = Matching.from_pairs(inst, [(0, 0), (1, 1), (2, 2), (3, 3)])
    steps = list(nesting_steps(m, inst))
    assert steps and diagnose_matching(steps[-1], inst).is_nested
    assert all(s.total_distance == m.total_distance for s in steps)


def test_exact_distance_is_order_free():
    r = np.array([0.1, 0.7, 0.3])
    d = np.array([0.2, 0.9, 0.05])
    assert exact_distance(r, d) == exact_distance(r[::-1], d[::-1])


def test_matching_cost_examples():
    inst = MarketInstance([0.0], [0.5], 1.0)
    m = Matching.from_pairs(inst, [(0, 0)])
    assert matching_cost(m, CostModel()) == m.total_distance
    assert matching_cost(m, CostModel(waiting_cost_c=1.0), [3]) == pytest.approx(3.5)
    with pytest.raises(ValueError):
        matching_cost(m, CostModel(), [1, 2])


def test_from_pairs_validation():
    inst = MarketInstance([0.1, 0.2], [0.3, 0.4], 1.0)
    with pytest.raises(ValueError):
        Matching.from_pairs(inst, [(0, 0), (1, 0)])
    with pytest.raises(ValueError):
        Matching.from_pairs(inst, [(0, 0), (0, 1)])
    with pytest.raises(ValueError):
        Matching.from_pairs(inst, [(0, 5)])
    with pytest.raises(ValueError):
        Matching.from_pairs(inst, [(0, 0)], unmatched=[1])


def test_driver_of():
    inst = MarketInstance([0.1, 0.9], [0.85], 1.0)
    m = omniscient_match_with_penalty(inst, 0.2)
    assert m.driver_of().tolist() == [-1, 0]


def test_matching_csv_roundtrip(tmp_path):
    inst = sample_instance(6, 6, seed=4)
    m = omniscient_match_with_penalty(inst, 0.05)
    path = tmp_path / "match.csv"
    write_matching_csv(m, path)
    assert path.read_text().splitlines()[0] == "rider_index,driver_index,distance"
    back = read_matching_csv(path, inst)
    assert back.same_pairs(m)
    assert back.total_cost == m.total_cost
