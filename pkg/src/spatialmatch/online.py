"""Online matching: greedy assignment, adversarial arrival orders, replay."""

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._validation import PreconditionError
from .market import ArrivalOrder, CostModel
from .offline import Matching, _sorted_order, exact_distance, matching_cost, omniscient_match

WORST_CASE_MAX_RIDERS = 8
ONLINE_ALGORITHMS = ("greedy", "omniscient-replay")


@dataclass(frozen=True, eq=False)
class OnlineOutcome:
    """Result of running an online algorithm.

    ``decision_trace`` holds ``(period, rider_index, driver_index)`` tuples,
    one per arrival; ``driver_index`` is ``None`` for a wait decision.
    """

    matching: Matching
    waited_periods: np.ndarray
    arrival_order: ArrivalOrder
    decision_trace: tuple
    total_cost: float

    @property
    def total_distance(self):
        return self.matching.total_distance


def _greedy_driver_indices(instance, order):
    if instance.m < instance.n:
        raise PreconditionError(
            f"greedy needs m >= n to serve every rider, got n={instance.n}, m={instance.m}"
        )
    d_order = _sorted_order(instance.drivers)
    ds = instance.drivers[d_order]
    arrivals = instance.riders[order.permutation]
    return d_order[_kernels.greedy_assign(ds, np.ascontiguousarray(arrivals))]


def _outcome(instance, order, drivers_in_order, cost_model):
    riders = order.permutation
    pairs = np.column_stack((riders, drivers_in_order))
    matching = Matching.from_pairs(instance, pairs)
    trace = tuple(
        (t + 1, int(ri), int(di)) for t, (ri, di) in enumerate(zip(riders, drivers_in_order))
    )
    waited = np.zeros(instance.n, dtype=np.int64)
    return OnlineOutcome(
        matching=matching,
        waited_periods=waited,
        arrival_order=order,
        decision_trace=trace,
        total_cost=matching_cost(matching, cost_model, waited),
    )


def greedy_match(instance, order, cost_model=None):
    """Match each arriving rider immediately to the closest unmatched driver.

    Equidistant drivers are resolved toward the smaller coordinate. Each
    query is answered from a union-find index of unmatched drivers, so a run
    costs ``O((n + m) log m)`` dominated by sorting.
    """
    cost_model = CostModel() if cost_model is None else cost_model
    chosen = _greedy_driver_indices(instance, order)
    return _outcome(instance, order, chosen, cost_model)


def greedy_total_distance(instance, order):
    """Total greedy distance, summed exactly like :class:`Matching` does."""
    return greedy_match(instance, order).total_distance


def worst_case_order(instance):
    """Arrival order maximizing greedy's total distance, by exhaustive search.

    Orders are visited lexicographically and only a strictly larger cost
    replaces the incumbent.

    Returns
    -------
    (ArrivalOrder, float)
    """
    n = instance.n
    if n > WORST_CASE_MAX_RIDERS:
        raise PreconditionError(f"worst_case_order is capped at n <= {WORST_CASE_MAX_RIDERS}")
    if instance.m < n:
        raise PreconditionError("greedy needs m >= n")
    d_order = _sorted_order(instance.drivers)
    ds = instance.drivers[d_order]
    best_cost, best_perm = -1.0, None
    for perm in itertools.permutations(range(n)):
        perm = np.array(perm, dtype=np.int64)
        arrivals = instance.riders[perm]
        chosen = d_order[_kernels.greedy_assign(ds, arrivals)]
        cost = exact_distance(arrivals, instance.drivers[chosen])
        if cost > best_cost:
            best_cost, best_perm = cost, perm
    return ArrivalOrder(best_perm, "exhaustive-worst"), best_cost


def run_online(instance, order, algorithm="greedy", cost_model=None):
    """Run an online algorithm over ``order`` and account for its cost.

    ``omniscient-replay`` matches each arrival to its partner in the ex post
    optimal matching, so its result does not depend on the order.
    """
    cost_model = CostModel() if cost_model is None else cost_model
    if algorithm == "greedy":
        return greedy_match(instance, order, cost_model)
    if algorithm == "omniscient-replay":
        partner = omniscient_match(instance).driver_of()
        return _outcome(instance, order, partner[order.permutation], cost_model)
    raise ValueError(f"unknown online algorithm {algorithm!r}; expected one of {ONLINE_ALGORITHMS}")


def write_trace_csv(outcome, instance, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period", "rider_index", "action", "driver_index", "distance"])
        for period, ri, di in outcome.decision_trace:
            if di is None:
                writer.writerow([period, ri, "wait", "", ""])
            else:
                dist = abs(instance.riders[ri] - instance.drivers[di])
                writer.writerow([period, ri, "match", di, format(dist, ".17g")])
