"""Compiled inner loops for the matchers.

All kernels take coordinates already sorted ascending (ties resolved by the
caller) and work on sorted indices.
"""

import numpy as np
from numba import njit

# provenance codes
SKIP_DRIVER = 0
MATCH = 1
SKIP_RIDER = 2


@njit(cache=True)
def band_rows(r, d, first, prev, nrows, prov):
    """Advance the order-preserving DP by ``nrows`` rider rows.

    Row ``i`` holds ``cost(i, i + t)`` for offsets ``t in [0, m - n]``: the
    cheapest way to serve sorted riders ``0..i`` with sorted drivers
    ``0..i+t``. ``prev`` is row ``first - 1`` (all zeros before the first
    rider). When ``prov`` has rows, one provenance byte per cell is stored.
    Ties prefer leaving the driver unused.
    """
    w = prev.size
    cur = prev.copy()
    store = prov.shape[0] > 0
    for k in range(nrows):
        i = first + k
        left = np.inf
        for t in range(w):
            take = cur[t] + abs(r[i] - d[i + t])
            if left <= take:
                cur[t] = left
                if store:
                    prov[k, t] = SKIP_DRIVER
            else:
                cur[t] = take
                if store:
                    prov[k, t] = MATCH
            left = cur[t]
    return cur


@njit(cache=True)
def band_backtrack(prov, first, i, t, out_r, out_d, count):
    """Walk provenance rows ``first..i`` backwards from cell ``(i, t)``."""
    while i >= first:
        if prov[i - first, t] == MATCH:
            out_r[count] = i
            out_d[count] = i + t
            count += 1
            i -= 1
        else:
            t -= 1
    return i, t, count


@njit(cache=True)
def penalty_rows(r, d, nu, first, prev, nrows, prov):
    """Advance the skip-penalty DP by ``nrows`` rider rows.

    Row ``i`` has ``m + 1`` entries; entry ``j + 1`` is the cheapest cost for
    sorted riders ``0..i`` and drivers ``0..j`` where any rider may be left
    unmatched at cost ``nu``; entry 0 is the no-driver column. Tie order:
    leave the driver unused, then match, then skip the rider.
    """
    w = prev.size
    prev = prev.copy()
    cur = np.empty(w)
    store = prov.shape[0] > 0
    for k in range(nrows):
        i = first + k
        cur[0] = prev[0] + nu
        if store:
            prov[k, 0] = SKIP_RIDER
        for j in range(1, w):
            best = cur[j - 1]
            code = SKIP_DRIVER
            take = prev[j - 1] + abs(r[i] - d[j - 1])
            if take < best:
                best = take
                code = MATCH
            skip = prev[j] + nu
            if skip < best:
                best = skip
                code = SKIP_RIDER
            cur[j] = best
            if store:
                prov[k, j] = code
        prev, cur = cur, prev
    return prev


@njit(cache=True)
def penalty_backtrack(prov, first, i, j, out_r, out_d, count, skipped, nskip):
    while i >= first:
        code = prov[i - first, j]
        if code == MATCH:
            out_r[count] = i
            out_d[count] = j - 1
            count += 1
            i -= 1
            j -= 1
        elif code == SKIP_DRIVER:
            j -= 1
        else:
            skipped[nskip] = i
            nskip += 1
            i -= 1
    return i, j, count, nskip


@njit(cache=True)
def sorted_cost(r_sorted, d_sorted):
    total = 0.0
    for i in range(r_sorted.size):
        total += abs(r_sorted[i] - d_sorted[i])
    return total


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


TIE_RTOL = 4.0 * np.finfo(np.float64).eps


@njit(cache=True)
def greedy_assign(d_sorted, arrivals):
    """Match each arriving rider to the nearest unmatched driver.

    ``arrivals`` are rider coordinates in arrival order. Returns the sorted
    driver index chosen for each arrival. Nearest-unmatched lookups use two
    union-find structures over sorted driver slots (predecessor and
    successor); equidistant ties go to the smaller coordinate, and among
    coincident drivers to the lowest slot. Distances within ``TIE_RTOL``
    (relative to the coordinates involved) count as equal, so that decimal
    inputs such as 0.3 / 0.5 / 0.7 tie as written.
    """
    m = d_sorted.size
    # slot s in left_parent is driver s - 1; slot 0 is the "none" sentinel
    left_parent = np.arange(m + 1)
    # slot s in right_parent is driver s; slot m is the "none" sentinel
    right_parent = np.arange(m + 1)
    out = np.empty(arrivals.size, dtype=np.int64)
    for a in range(arrivals.size):
        x = arrivals[a]
        pos = np.searchsorted(d_sorted, x)
        lslot = _find(left_parent, pos)
        rslot = _find(right_parent, pos)
        lo = lslot - 1
        hi = rslot if rslot < m else -1
        if lo < 0:
            j = hi
        elif hi < 0:
            j = lo
        else:
            scale = max(abs(x), abs(d_sorted[lo]), abs(d_sorted[hi]))
            if (x - d_sorted[lo]) - (d_sorted[hi] - x) <= TIE_RTOL * scale:
                j = lo
            else:
                j = hi
        if j == lo:
            # lowest free slot sharing this coordinate
            j = _find(right_parent, np.searchsorted(d_sorted, d_sorted[lo]))
        out[a] = j
        left_parent[j + 1] = j
        right_parent[j] = j + 1
    return out


@njit(cache=True)
def greedy_cost(d_sorted, arrivals):
    idx = greedy_assign(d_sorted, arrivals)
    total = 0.0
    for a in range(arrivals.size):
        total += abs(arrivals[a] - d_sorted[idx[a]])
    return total


@njit(cache=True)
def band_cost(r_sorted, d_sorted):
    n = r_sorted.size
    w = d_sorted.size - n + 1
    if n == 0:
        return 0.0
    row = band_rows(r_sorted, d_sorted, 0, np.zeros(w), n, np.empty((0, 0), np.uint8))
    return row[w - 1]


@njit(cache=True)
def penalty_cost(r_sorted, d_sorted, nu):
    w = d_sorted.size + 1
    row = penalty_rows(
        r_sorted, d_sorted, nu, 0, np.zeros(w), r_sorted.size, np.empty((0, 0), np.uint8)
    )
    return row[w - 1]
