"""Market instances on an interval: sampling, normalization and arrival orders."""

import csv
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._rng import make_rng
from ._validation import check_count, check_ell, check_permutation, check_positions

ORDER_STRATEGIES = (
    "random",
    "ascending",
    "descending",
    "as-sampled",
    "explicit",
    "exhaustive-worst",
)


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MarketInstance:
    """Rider and driver coordinates on ``[0, ell]``.

    Coordinates keep their sampling order; nothing downstream assumes they
    are sorted.
    """

    riders: np.ndarray
    drivers: np.ndarray
    ell: float = 1.0

    def __post_init__(self):
        ell = float(check_ell(self.ell))
        riders = check_positions(self.riders, ell=ell, name="riders")
        drivers = check_positions(self.drivers, ell=ell, name="drivers")
        object.__setattr__(self, "ell", ell)
        object.__setattr__(self, "riders", _frozen(riders))
        object.__setattr__(self, "drivers", _frozen(drivers))

    @property
    def n(self):
        return self.riders.size

    @property
    def m(self):
        return self.drivers.size

    def same_as(self, other):
        """Bitwise equality of coordinates and interval length."""
        return (
            self.ell == other.ell
            and np.array_equal(self.riders, other.riders)
            and np.array_equal(self.drivers, other.drivers)
        )

    def with_drivers(self, drivers):
        return MarketInstance(self.riders, drivers, self.ell)

    def __repr__(self):
        return f"MarketInstance(n={self.n}, m={self.m}, ell={self.ell})"


@dataclass(frozen=True)
class DistributionSpec:
    """Distribution of normalized coordinates on ``[0, 1]``.

    ``kind="uniform"`` is the identity CDF. ``kind="cdf-table"`` is a monotone
    piecewise-linear CDF through ``knots``, a sequence of ``(x, F(x))`` pairs
    strictly increasing in both coordinates with ``F(0) = 0`` and ``F(1) = 1``.
    """

    kind: str = "uniform"
    knots: tuple = ()

    def __post_init__(self):
        if self.kind == "uniform":
            if self.knots:
                raise ValueError("uniform distribution takes no knots")
            return
        if self.kind != "cdf-table":
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        knots = tuple((float(x), float(f)) for x, f in self.knots)
        if len(knots) < 2:
            raise ValueError("cdf-table needs at least two knots")
        xs = np.array([k[0] for k in knots])
        fs = np.array([k[1] for k in knots])
        if xs[0] != 0.0 or xs[-1] != 1.0 or fs[0] != 0.0 or fs[-1] != 1.0:
            raise ValueError("cdf-table must start at (0, 0) and end at (1, 1)")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(fs) <= 0):
            raise ValueError("cdf-table knots must be strictly increasing in both coordinates")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def uniform(cls):
        return cls("uniform")

    @classmethod
    def from_knots(cls, knots):
        return cls("cdf-table", tuple(map(tuple, knots)))

    @property
    def _xs(self):
        return np.array([k[0] for k in self.knots])

    @property
    def _fs(self):
        return np.array([k[1] for k in self.knots])

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "uniform":
            return np.clip(x, 0.0, 1.0)
        return np.interp(x, self._xs, self._fs)

    def ppf(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "uniform":
            return np.clip(u, 0.0, 1.0)
        return np.interp(u, self._fs, self._xs)

    def lipschitz_constant(self):
        """Largest slope of the CDF."""
        if self.kind == "uniform":
            return 1.0
        return float(np.max(np.diff(self._fs) / np.diff(self._xs)))

    def inverse_lipschitz_constant(self):
        """Largest slope of the inverse CDF."""
        if self.kind == "uniform":
            return 1.0
        return float(np.max(np.diff(self._xs) / np.diff(self._fs)))

    def to_dict(self):
        if self.kind == "uniform":
            return {"kind": "uniform"}
        return {"kind": "cdf-table", "knots": [list(k) for k in self.knots]}

    @classmethod
    def from_dict(cls, obj):
        kind = obj.get("kind")
        if kind == "uniform":
            return cls.uniform()
        if kind == "cdf-table":
            return cls.from_knots(obj.get("knots", ()))
        raise ValueError(f"unknown distribution kind {kind!r}")

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True, eq=False)
class ArrivalOrder:
    """Order in which riders are revealed; ``permutation[t]`` arrives at period ``t + 1``."""

    permutation: np.ndarray
    strategy: str = "explicit"

    def __post_init__(self):
        if self.strategy not in ORDER_STRATEGIES:
            raise ValueError(f"unknown order strategy {self.strategy!r}")
        perm = np.array(self.permutation, dtype=np.int64).reshape(-1)
        check_permutation(perm, perm.size)
        perm.setflags(write=False)
        object.__setattr__(self, "permutation", perm)

    def __len__(self):
        return self.permutation.size

    def __iter__(self):
        return iter(self.permutation.tolist())


@dataclass(frozen=True)
class CostModel:
    """Per-period waiting cost ``c`` and optional skip penalty ``nu``."""

    waiting_cost_c: float = 0.0
    penalty_nu: Optional[float] = None

    def __post_init__(self):
        if self.waiting_cost_c < 0:
            raise ValueError("waiting_cost_c must be >= 0")
        if self.penalty_nu is not None and self.penalty_nu < 0:
            raise ValueError("penalty_nu must be >= 0")


def sample_instance(n, m, ell=1.0, dist=None, seed=0):
    """Draw ``n`` riders and ``m`` drivers i.i.d. from ``dist`` scaled to ``[0, ell]``.

    Riders are drawn first, then drivers, from a single Philox stream keyed by
    ``seed``, so equal arguments always give bit-identical instances.
    """
    n = check_count(n, "n")
    m = check_count(m, "m")
    ell = float(check_ell(ell))
    dist = DistributionSpec.uniform() if dist is None else dist
    rng = make_rng(seed)
    riders = ell * dist.ppf(rng.random(n))
    drivers = ell * dist.ppf(rng.random(m))
    # guard against ell * 1.0-ish rounding past the boundary
    return MarketInstance(np.minimum(riders, ell), np.minimum(drivers, ell), ell)


def normalize_instance(instance, dist):
    """Map every coordinate ``x`` to ``F(x / ell)`` on the unit interval."""
    ell = instance.ell
    return MarketInstance(
        dist.cdf(instance.riders / ell), dist.cdf(instance.drivers / ell), 1.0
    )


def max_adjacent_gap(instance):
    """Largest spacing between sorted drivers, with 0 and ``ell`` as sentinels."""
    if instance.m == 0:
        raise ValueError("max_adjacent_gap needs at least one driver")
    pts = np.concatenate(([0.0], np.sort(instance.drivers), [instance.ell]))
    return float(np.max(np.diff(pts)))


def arrival_order(instance, strategy="as-sampled", seed=0, permutation=None):
    """Build an :class:`ArrivalOrder` for the riders of ``instance``.

    Coordinate ties in the sorted strategies are broken by rider index.
    ``exhaustive-worst`` delegates to :func:`spatialmatch.online.worst_case_order`.
    """
    n = instance.n
    idx = np.arange(n)
    if strategy == "random":
        perm = make_rng(seed).permutation(n)
    elif strategy == "ascending":
        perm = np.lexsort((idx, instance.riders))
    elif strategy == "descending":
        perm = np.lexsort((idx, -instance.riders))
    elif strategy == "as-sampled":
        perm = idx
    elif strategy == "explicit":
        if permutation is None:
            raise ValueError("explicit strategy requires a permutation")
        perm = check_permutation(permutation, n)
    elif strategy == "exhaustive-worst":
        from .online import worst_case_order

        return worst_case_order(instance)[0]
    else:
        raise ValueError(f"unknown order strategy {strategy!r}")
    return ArrivalOrder(perm, strategy)


def write_instance_csv(instance, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["role", "index", "position"])
        for role, pts in (("rider", instance.riders), ("driver", instance.drivers)):
            for i, x in enumerate(pts.tolist()):
                writer.writerow([role, i, format(x, ".17g")])


def read_instance_csv(path, ell):
    """Read an instance written by :func:`write_instance_csv`.

    The CSV does not carry the interval length, so it must be supplied.
    """
    rows = {"rider": {}, "driver": {}}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["role", "index", "position"]:
            raise ValueError(f"unexpected instance header {reader.fieldnames}")
        for rec in reader:
            role = rec["role"]
            if role not in rows:
                raise ValueError(f"unknown role {role!r}")
            rows[role][int(rec["index"])] = float(rec["position"])
    out = []
    for role in ("rider", "driver"):
        d = rows[role]
        if sorted(d) != list(range(len(d))):
            raise ValueError(f"{role} indices are not contiguous from 0")
        out.append([d[i] for i in range(len(d))])
    return MarketInstance(out[0], out[1], ell)
