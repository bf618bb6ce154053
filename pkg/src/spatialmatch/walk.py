"""The driver-minus-rider walk along the interval and its slice decomposition.

The walk starts at 0 and steps +1 at every driver and -1 at every rider,
read left to right. For ``m >= n`` its final value is ``m - n``; the last
hop after which the walk sits at or below level ``i`` cuts the interval into
``m - n + 1`` slices, each holding one more driver than rider (except the
first, which is balanced).
"""

import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._validation import PreconditionError

ENUMERATION_CAP = 22
PMF_VARIANTS = ("proof", "statement")

# Largest ratio of the exact slice-hop PMF (proof variant) to the tail shape
# k**-1.5 * (1 - eps**2/18)**k (k**-0.5 for slice 0), over n in 3..8,
# m = n + ceil(n/2), eps = 1/2, every slice and every k >= 1.
# Regenerate with calibrate_tail_constant().
TAIL_CONSTANT = 0.7050263223436496


@dataclass(frozen=True, eq=False)
class WalkProfile:
    """Hops of the walk sorted by position.

    ``signs[h]`` is +1 for a driver and -1 for a rider; ``source[h]`` is the
    index of that point in the instance's rider or driver list.
    """

    positions: np.ndarray
    signs: np.ndarray
    source: np.ndarray
    total_up: int
    total_down: int

    @property
    def hops(self):
        return list(zip(self.positions.tolist(), self.signs.tolist()))

    def running_sum(self):
        """Walk value after each hop, with the starting value 0 prepended."""
        return np.concatenate(([0], np.cumsum(self.signs)))

    def value_at(self, x):
        """``|D n [0, x]| - |R n [0, x]|``."""
        h = int(np.searchsorted(self.positions, x, side="right"))
        return int(self.signs[:h].sum())

    def __len__(self):
        return self.positions.size


@dataclass(frozen=True, eq=False)
class SliceDecomposition:
    """Exit times, slice hop counts and slice lengths.

    ``hop_index[i]`` is the number of hops up to and including the hop at
    ``exit_times[i]``; slice ``i`` holds hops ``hop_index[i-1]+1 .. hop_index[i]``.
    """

    exit_times: np.ndarray
    slice_hops: np.ndarray
    slice_lengths: np.ndarray
    hop_index: np.ndarray

    def __len__(self):
        return self.exit_times.size

    def slice_counts(self, walk):
        """Per-slice ``(riders, drivers)`` counts as two integer arrays."""
        bounds = np.concatenate(([0], self.hop_index))
        up = np.concatenate(([0], np.cumsum(walk.signs > 0)))
        drivers = np.diff(up[bounds])
        return np.diff(bounds) - drivers, drivers

    def weighted_cost(self):
        """``sum_i slice_hops[i] * slice_lengths[i]``, an upper bound on the optimal cost."""
        return float(np.dot(self.slice_hops, self.slice_lengths))


@dataclass(frozen=True)
class HopPmf:
    """Exact distribution of a slice hop count; keys are (even) hop counts."""

    entries: dict

    def total(self):
        return sum(self.entries.values(), Fraction(0))

    def __getitem__(self, hops):
        return self.entries.get(hops, Fraction(0))

    def support(self):
        return sorted(self.entries)

    def mean(self):
        return sum((Fraction(h) * p for h, p in self.entries.items()), Fraction(0))

    def to_csv(self, path):
        """Rows ``k,numerator,denominator`` with ``k`` half the hop count."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "numerator", "denominator"])
            for h in self.support():
                p = self.entries[h]
                writer.writerow([h // 2, p.numerator, p.denominator])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            return cls(
                {
                    2 * int(rec["k"]): Fraction(int(rec["numerator"]), int(rec["denominator"]))
                    for rec in csv.DictReader(fh)
                }
            )


def build_walk(instance):
    """Sort all points into a hop sequence; coincident points put drivers first."""
    positions = np.concatenate((instance.drivers, instance.riders))
    signs = np.concatenate(
        (np.ones(instance.m, dtype=np.int64), -np.ones(instance.n, dtype=np.int64))
    )
    source = np.concatenate((np.arange(instance.m), np.arange(instance.n)))
    order = np.lexsort((source, -signs, positions))
    arrays = [positions[order], signs[order], source[order]]
    for arr in arrays:
        arr.setflags(write=False)
    return WalkProfile(*arrays, total_up=instance.m, total_down=instance.n)


def _last_visits(running, levels):
    """For each level, the last index ``j`` with ``running[j] <= level``."""
    suffix_min = np.minimum.accumulate(running[::-1])[::-1]
    return np.searchsorted(suffix_min, levels, side="right") - 1


def slice_decomposition(walk, ell):
    """Cut ``[0, ell]`` at the exit times of the walk.

    Exit time ``i`` is the position of the last hop after which the walk is
    at or below level ``i`` (0 if no hop qualifies); the final exit time is
    ``ell``.
    """
    n, m = walk.total_down, walk.total_up
    if m < n:
        raise PreconditionError(f"slice decomposition needs m >= n, got n={n}, m={m}")
    running = walk.running_sum()
    last = _last_visits(running, np.arange(m - n + 1))
    padded = np.concatenate(([0.0], walk.positions))
    gamma = padded[last]
    gamma[-1] = ell
    hhat = np.empty_like(last)
    hhat[0] = last[0]
    hhat[1:] = np.diff(last) - 1
    tau = np.diff(np.concatenate(([0.0], gamma)))
    return SliceDecomposition(gamma, hhat, tau, last)


def first_return_time(walk, x, ell):
    """First position after ``x`` where the walk is back at its value at ``x``.

    At least one hop must occur after ``x``. Returns ``None`` when the walk
    never returns.
    """
    if not 0.0 <= x <= ell:
        raise ValueError(f"x must lie in [0, {ell}]")
    running = walk.running_sum()
    h = int(np.searchsorted(walk.positions, x, side="right"))
    later = np.flatnonzero(running[h + 1 :] == running[h])
    if later.size == 0:
        return None
    return float(walk.positions[h + later[0]])


def slice_hop_pmf(n, m, slice_index, variant="proof"):
    """Exact distribution of the hop count strictly inside one slice.

    Slice 0 uses the balanced-prefix formula; slices ``i >= 1`` use the
    excursion formula with either the ``C(m+n-2k-1, n-k)`` factor
    (``variant="proof"``, which normalizes) or ``C(m+n-2k, n-k)``
    (``variant="statement"``, which does not in general). All arithmetic is
    exact.
    """
    if variant not in PMF_VARIANTS:
        raise ValueError(f"variant must be one of {PMF_VARIANTS}")
    if n < 0 or m < n:
        raise PreconditionError(f"slice_hop_pmf needs 0 <= n <= m, got n={n}, m={m}")
    if not 0 <= slice_index <= m - n:
        raise PreconditionError(f"slice index must lie in [0, {m - n}]")
    total = math.comb(m + n, n)
    entries = {}
    if slice_index == 0:
        if m == n:
            return HopPmf({2 * n: Fraction(1)})
        for k in range(n + 1):
            count = Fraction(m - n, m + n - 2 * k) * math.comb(2 * k, k) * math.comb(
                m + n - 2 * k, n - k
            )
            if count:
                entries[2 * k] = count / total
        return HopPmf(entries)
    shift = 1 if variant == "proof" else 0
    for k in range(n + 1):
        top = m + n - 2 * k - shift
        if top < 0:
            continue
        count = Fraction(math.comb(2 * k, k), k + 1) * math.comb(top, n - k)
        if count:
            entries[2 * k] = count / total
    return HopPmf(entries)


def _all_orderings(n, m, chunk=1 << 16):
    """Every placement of ``n`` riders among ``n + m`` hops as a sign matrix."""
    size = n + m
    shifts = np.arange(size, dtype=np.int64)
    blocks = []
    for start in range(0, 1 << size, chunk):
        masks = np.arange(start, min(start + chunk, 1 << size), dtype=np.int64)
        bits = ((masks[:, None] >> shifts) & 1).astype(np.int8)
        blocks.append(bits[bits.sum(axis=1) == n])
    return (1 - 2 * np.concatenate(blocks)).astype(np.int8)


def enumerate_hop_distribution(n, m, slice_index):
    """Slice-hop distribution by walking every equally likely ordering.

    Independent of :func:`slice_hop_pmf`: it tallies the hop counts the
    walk actually produces over all ``C(n+m, n)`` orderings.
    """
    if n + m > ENUMERATION_CAP:
        raise PreconditionError(f"enumeration is capped at n + m <= {ENUMERATION_CAP}")
    if n < 0 or m < n:
        raise PreconditionError(f"enumeration needs 0 <= n <= m, got n={n}, m={m}")
    if not 0 <= slice_index <= m - n:
        raise PreconditionError(f"slice index must lie in [0, {m - n}]")
    signs = _all_orderings(n, m)
    running = np.zeros((signs.shape[0], n + m + 1), dtype=np.int16)
    np.cumsum(signs, axis=1, out=running[:, 1:])
    suffix_min = np.minimum.accumulate(running[:, ::-1], axis=1)[:, ::-1]

    def last_visit(level):
        # suffix_min is nondecreasing along each row
        return (suffix_min <= level).sum(axis=1) - 1

    if slice_index == 0:
        hops = last_visit(0)
    else:
        hops = last_visit(slice_index) - last_visit(slice_index - 1) - 1
    values, counts = np.unique(hops, return_counts=True)
    total = signs.shape[0]
    return HopPmf({int(v): Fraction(int(c), total) for v, c in zip(values, counts)})


def _tail_shape(eps, k, slice_index):
    power = 0.5 if slice_index == 0 else 1.5
    return k ** (-power) * (1.0 - eps**2 / 18.0) ** k


def tail_bound(n, m, eps, k, slice_index, constant=TAIL_CONSTANT):
    """Geometric tail bound on ``P(slice hops = 2k)``.

    ``constant * k**-1.5 * (1 - eps**2/18)**k`` for slices ``i >= 1`` and
    ``constant * k**-0.5 * (1 - eps**2/18)**k`` for slice 0.
    """
    if eps <= 0:
        raise PreconditionError("eps must be > 0")
    if m < (1 + eps) * n:
        raise PreconditionError(f"tail bound needs m >= (1 + eps) n, got n={n}, m={m}, eps={eps}")
    if k < 1:
        raise PreconditionError("k must be >= 1")
    if not 0 <= slice_index <= m - n:
        raise PreconditionError(f"slice index must lie in [0, {m - n}]")
    return constant * _tail_shape(eps, k, slice_index)


def calibrate_tail_constant(eps=0.5, n_values=range(3, 9)):
    """Smallest constant making :func:`tail_bound` dominate the exact PMFs on a grid."""
    worst = 0.0
    for n in n_values:
        m = n + math.ceil(Fraction(eps).limit_denominator(10**6) * n)
        for i in range(m - n + 1):
            pmf = slice_hop_pmf(n, m, i, "proof")
            for k in range(1, n + 1):
                worst = max(worst, float(pmf[2 * k]) / _tail_shape(eps, k, i))
    return worst


def max_slice_alpha(eps):
    """``ceil(-3 / ln(1 - eps**2/18))``, the slice-size multiplier of log n."""
    return math.ceil(-3.0 / math.log(1.0 - eps**2 / 18.0))


def write_slices_csv(decomposition, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "gamma", "hhat", "tauhat"])
        for i, (g, h, t) in enumerate(
            zip(
                decomposition.exit_times.tolist(),
                decomposition.slice_hops.tolist(),
                decomposition.slice_lengths.tolist(),
            )
        ):
            writer.writerow([i, format(g, ".17g"), h, format(t, ".17g")])
