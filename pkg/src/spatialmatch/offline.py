"""Omniscient (ex post optimal) matchings on the line and their structure."""

import csv
import json
import math
from dataclasses import dataclass
from math import isqrt
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from ._validation import PreconditionError, check_nu

# one provenance byte per DP cell up to this many cells, else checkpointed rows
CELL_BUDGET = 10**8

BRUTE_FORCE_MAX_RIDERS = 7
BRUTE_FORCE_MAX_DRIVERS = 9


def _sorted_order(x):
    """Ascending order of ``x`` with ties broken by index."""
    return np.lexsort((np.arange(x.size), x))


def exact_distance(riders, drivers):
    """Correctly rounded ``sum |r - d|`` over paired coordinate arrays.

    The sum is taken over signed coordinates with ``math.fsum``, so any two
    matchings that use the same coordinates with the same signs (for example
    a same-orientation swap) get bit-identical totals.
    """
    riders = np.asarray(riders, dtype=np.float64)
    drivers = np.asarray(drivers, dtype=np.float64)
    right = drivers >= riders
    terms = np.concatenate(
        (
            drivers[right],
            -riders[right],
            riders[~right],
            -drivers[~right],
        )
    )
    return math.fsum(terms.tolist())


@dataclass(frozen=True, eq=False)
class Matching:
    """A set of rider-to-driver pairs, plus riders left unmatched at cost ``nu``.

    ``pairs`` is an ``(p, 2)`` integer array of ``(rider_index, driver_index)``
    sorted by rider index; indices refer to the instance's original order.
    """

    pairs: np.ndarray
    unmatched_riders: np.ndarray
    per_pair_distance: np.ndarray
    total_distance: float
    total_penalty: float
    n: int
    m: int
    nu: Optional[float] = None

    @classmethod
    def from_pairs(cls, instance, pairs, unmatched=(), nu=None):
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        unmatched = np.sort(np.asarray(unmatched, dtype=np.int64).reshape(-1))
        if pairs.size:
            if pairs[:, 0].min() < 0 or pairs[:, 0].max() >= instance.n:
                raise ValueError("rider index out of range")
            if pairs[:, 1].min() < 0 or pairs[:, 1].max() >= instance.m:
                raise ValueError("driver index out of range")
        if unmatched.size and (unmatched.min() < 0 or unmatched.max() >= instance.n):
            raise ValueError("unmatched rider index out of range")
        riders_used = np.concatenate((pairs[:, 0], unmatched))
        if np.unique(riders_used).size != riders_used.size:
            raise ValueError("a rider appears more than once")
        if np.unique(pairs[:, 1]).size != pairs.shape[0]:
            raise ValueError("a driver appears more than once")
        if unmatched.size and nu is None:
            raise ValueError("unmatched riders require a penalty nu")
        pairs = pairs[np.argsort(pairs[:, 0], kind="stable")]
        r = instance.riders[pairs[:, 0]]
        d = instance.drivers[pairs[:, 1]]
        for arr in (pairs, unmatched):
            arr.setflags(write=False)
        dist = np.abs(r - d)
        dist.setflags(write=False)
        return cls(
            pairs=pairs,
            unmatched_riders=unmatched,
            per_pair_distance=dist,
            total_distance=exact_distance(r, d),
            total_penalty=0.0 if nu is None else float(nu) * unmatched.size,
            n=instance.n,
            m=instance.m,
            nu=None if nu is None else float(nu),
        )

    @property
    def total_cost(self):
        return self.total_distance + self.total_penalty

    def driver_of(self):
        """Array mapping rider index to driver index, ``-1`` when unmatched."""
        out = np.full(self.n, -1, dtype=np.int64)
        out[self.pairs[:, 0]] = self.pairs[:, 1]
        return out

    def same_pairs(self, other):
        return np.array_equal(self.pairs, other.pairs) and np.array_equal(
            self.unmatched_riders, other.unmatched_riders
        )

    def __len__(self):
        return self.pairs.shape[0]


@dataclass(frozen=True)
class MatchDiagnostics:
    is_nested: bool
    orientation_consistent: bool
    entwined_pair_count: int


def _blocked_rows(step, n, init, budget):
    """Yield ``(first_row, provenance_block)`` from the last block to the first.

    Small problems keep all provenance; large ones checkpoint every
    ``~sqrt(n)`` rows and recompute each block on the way back.
    """
    w = init.size
    if n * w <= budget:
        prov = np.empty((n, w), dtype=np.uint8)
        step(0, init, n, prov)
        yield 0, prov
        return
    block = isqrt(n) + 1
    empty = np.empty((0, 0), dtype=np.uint8)
    checkpoints = []
    row = init
    for first in range(0, n, block):
        checkpoints.append((first, row))
        row = step(first, row, min(block, n - first), empty)
    for first, row in reversed(checkpoints):
        nrows = min(block, n - first)
        prov = np.empty((nrows, w), dtype=np.uint8)
        step(first, row, nrows, prov)
        yield first, prov


def omniscient_match(instance, *, _cell_budget=CELL_BUDGET):
    """Minimum total distance matching that serves every rider.

    Solved by dynamic programming over sorted riders and drivers. Some
    optimal matching on the line preserves order, so sorted rider ``i`` is
    matched to a sorted driver in ``[i, i + m - n]`` and only that band of
    the table is filled: ``O(n (m - n + 1))`` time.

    Raises
    ------
    PreconditionError
        If there are fewer drivers than riders.
    """
    n, m = instance.n, instance.m
    if m < n:
        raise PreconditionError(f"omniscient_match needs m >= n, got n={n}, m={m}")
    if n == 0:
        return Matching.from_pairs(instance, [])
    r_order = _sorted_order(instance.riders)
    d_order = _sorted_order(instance.drivers)
    rs = instance.riders[r_order]
    ds = instance.drivers[d_order]
    w = m - n + 1

    def step(first, prev, nrows, prov):
        return _kernels.band_rows(rs, ds, first, prev, nrows, prov)

    out_r = np.empty(n, dtype=np.int64)
    out_d = np.empty(n, dtype=np.int64)
    i, t, count = n - 1, w - 1, 0
    for first, prov in _blocked_rows(step, n, np.zeros(w), _cell_budget):
        i, t, count = _kernels.band_backtrack(prov, first, i, t, out_r, out_d, count)
    pairs = np.column_stack((r_order[out_r[:count]], d_order[out_d[:count]]))
    return Matching.from_pairs(instance, pairs)


def omniscient_match_with_penalty(instance, nu, *, _cell_budget=CELL_BUDGET):
    """Minimum of total distance plus ``nu`` per unmatched rider.

    Drivers may stay idle at no cost. Runs in ``O(n m)`` time.
    """
    nu = check_nu(nu, allow_none=False)
    n, m = instance.n, instance.m
    if n == 0:
        return Matching.from_pairs(instance, [], nu=nu)
    r_order = _sorted_order(instance.riders)
    d_order = _sorted_order(instance.drivers)
    rs = instance.riders[r_order]
    ds = instance.drivers[d_order]

    def step(first, prev, nrows, prov):
        return _kernels.penalty_rows(rs, ds, nu, first, prev, nrows, prov)

    out_r = np.empty(n, dtype=np.int64)
    out_d = np.empty(n, dtype=np.int64)
    skipped = np.empty(n, dtype=np.int64)
    i, j, count, nskip = n - 1, m, 0, 0
    for first, prov in _blocked_rows(step, n, np.zeros(m + 1), _cell_budget):
        i, j, count, nskip = _kernels.penalty_backtrack(
            prov, first, i, j, out_r, out_d, count, skipped, nskip
        )
    pairs = np.column_stack((r_order[out_r[:count]], d_order[out_d[:count]]))
    return Matching.from_pairs(instance, pairs, r_order[skipped[:nskip]], nu=nu)


def sorted_match(instance):
    """Pair the i-th smallest rider with the i-th smallest driver (balanced markets)."""
    if instance.m != instance.n:
        raise PreconditionError(
            f"sorted_match needs m == n, got n={instance.n}, m={instance.m}"
        )
    pairs = np.column_stack(
        (_sorted_order(instance.riders), _sorted_order(instance.drivers))
    )
    return Matching.from_pairs(instance, pairs)


def brute_force_match(instance, nu=None):
    """Exhaustive minimizer over all rider-to-driver injections.

    With ``nu`` set, each rider may also be skipped at cost ``nu``. Riders
    are assigned in index order trying drivers ``0..m-1`` and then the skip
    option, and only a strictly cheaper completion replaces the incumbent, so
    the lexicographically first minimizer is returned.
    """
    n, m = instance.n, instance.m
    if n > BRUTE_FORCE_MAX_RIDERS or m > BRUTE_FORCE_MAX_DRIVERS:
        raise PreconditionError(
            f"brute force is capped at n <= {BRUTE_FORCE_MAX_RIDERS}, "
            f"m <= {BRUTE_FORCE_MAX_DRIVERS}"
        )
    nu = check_nu(nu)
    if nu is None and m < n:
        raise PreconditionError("without a penalty every rider needs a driver (m >= n)")
    riders = instance.riders.tolist()
    drivers = instance.drivers.tolist()
    dist = [[abs(r - d) for d in drivers] for r in riders]
    used = [False] * m
    choice = [-1] * n
    best = [math.inf, None]

    def visit(i, partial):
        if partial >= best[0]:
            return
        if i == n:
            best[0] = partial
            best[1] = list(choice)
            return
        row = dist[i]
        for j in range(m):
            if not used[j]:
                used[j] = True
                choice[i] = j
                visit(i + 1, partial + row[j])
                used[j] = False
        if nu is not None:
            choice[i] = -1
            visit(i + 1, partial + nu)

    visit(0, 0.0)
    assignment = best[1]
    pairs = [(i, j) for i, j in enumerate(assignment) if j >= 0]
    unmatched = [i for i, j in enumerate(assignment) if j < 0]
    return Matching.from_pairs(instance, pairs, unmatched, nu=nu)


def _intervals(matching, instance):
    r = instance.riders[matching.pairs[:, 0]]
    d = instance.drivers[matching.pairs[:, 1]]
    return np.minimum(r, d), np.maximum(r, d), d > r


def _relations(lo, hi, right, rows):
    """Overlap, entwined and orientation-conflict masks for a block of rows."""
    lo_i, hi_i = lo[rows, None], hi[rows, None]
    overlap = np.maximum(lo_i, lo[None, :]) < np.minimum(hi_i, hi[None, :])
    contains = ((lo_i <= lo) & (hi <= hi_i)) | ((lo <= lo_i) & (hi_i <= hi))
    entwined = overlap & ~contains
    conflict = overlap & (right[rows, None] != right[None, :])
    return entwined, conflict


def diagnose_matching(matching, instance, block=512):
    """Nestedness, entwined-pair count and orientation consistency.

    Two pairs overlap when their open intervals intersect; overlapping pairs
    are nested when one interval contains the other and entwined otherwise.
    """
    lo, hi, right = _intervals(matching, instance)
    p = lo.size
    entwined_count = 0
    consistent = True
    for start in range(0, p, block):
        rows = np.arange(start, min(start + block, p))
        entwined, conflict = _relations(lo, hi, right, rows)
        upper = rows[:, None] < np.arange(p)[None, :]
        entwined_count += int(np.count_nonzero(entwined & upper))
        consistent = consistent and not bool(np.any(conflict))
    return MatchDiagnostics(
        is_nested=entwined_count == 0,
        orientation_consistent=consistent,
        entwined_pair_count=entwined_count,
    )


def nesting_steps(matching, instance):
    """Yield the successive matchings produced by the uncrossing procedure.

    At each step the longest pair that is entwined with some other pair is
    swapped with the first such partner (by rider index): the two riders and
    two drivers are re-paired so that one interval contains the other. Both
    pairs share an orientation, so the signed coordinates are unchanged and
    the total distance is preserved exactly.

    Raises
    ------
    ValueError
        If an entwined pair has the opposite orientation; every re-pairing
        of such pairs strictly changes the cost.
    """
    pairs = matching.pairs.copy()
    riders, drivers = instance.riders, instance.drivers
    while True:
        r = riders[pairs[:, 0]]
        d = drivers[pairs[:, 1]]
        lo, hi, right = np.minimum(r, d), np.maximum(r, d), d > r
        entwined, _ = _relations(lo, hi, right, np.arange(lo.size))
        involved = np.flatnonzero(entwined.any(axis=1))
        if involved.size == 0:
            return
        length = hi[involved] - lo[involved]
        a = int(involved[np.argmax(length)])
        b = int(np.flatnonzero(entwined[a])[0])
        if right[a] != right[b]:
            raise ValueError(
                "entwined pairs with opposite orientation cannot be nested at equal cost"
            )
        (ra, rb) = sorted((pairs[a, 0], pairs[b, 0]), key=lambda k: (riders[k], k))
        (da, db) = sorted((pairs[a, 1], pairs[b, 1]), key=lambda k: (drivers[k], k))
        if right[a]:
            # outer pair: leftmost rider with rightmost driver
            new = ((ra, db), (rb, da))
        else:
            new = ((rb, da), (ra, db))
        pairs[a] = new[0]
        pairs[b] = new[1]
        yield Matching.from_pairs(instance, pairs, matching.unmatched_riders, nu=matching.nu)


def nested_transform(matching, instance):
    """Return a nested matching with exactly the same total distance."""
    out = matching
    for out in nesting_steps(matching, instance):
        pass
    return out


def matching_cost(matching, cost_model, waited_periods=None):
    """Distance plus penalties plus ``c`` times the total number of waited periods."""
    if waited_periods is None:
        waited = np.zeros(matching.n)
    else:
        waited = np.asarray(waited_periods, dtype=np.float64)
        if waited.shape != (matching.n,):
            raise ValueError(f"waited_periods must have length {matching.n}")
        if np.any(waited < 0):
            raise ValueError("waited_periods entries must be >= 0")
    return matching.total_distance + matching.total_penalty + cost_model.waiting_cost_c * float(
        waited.sum()
    )


def write_matching_csv(matching, path):
    """Write pairs to ``path`` and totals to a ``.json`` sidecar next to it.

    Unmatched riders follow the pairs as trailer rows with empty driver and
    distance fields.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rider_index", "driver_index", "distance"])
        for (ri, di), dist in zip(matching.pairs.tolist(), matching.per_pair_distance.tolist()):
            writer.writerow([ri, di, format(dist, ".17g")])
        for ri in matching.unmatched_riders.tolist():
            writer.writerow([ri, "", ""])
    sidecar = {
        "total_distance": matching.total_distance,
        "total_penalty": matching.total_penalty,
        "n": matching.n,
        "m": matching.m,
        "nu": matching.nu,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))


def read_matching_csv(path, instance):
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    pairs, unmatched = [], []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            if rec["driver_index"] == "":
                unmatched.append(int(rec["rider_index"]))
            else:
                pairs.append((int(rec["rider_index"]), int(rec["driver_index"])))
    return Matching.from_pairs(instance, pairs, unmatched, nu=meta.get("nu"))
