"""Monte Carlo experiments over random markets.

Every trial draws its own instance from a seed derived as
``mix64(master_seed, n, trial_index)``; arrival orders and extra drivers use
further derived streams. Reports are therefore pure functions of their
configuration.
"""

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import __version__, _kernels
from ._rng import EXTRA_DRIVER_STREAM, ORDER_STREAM, make_rng, mix64
from ._validation import PreconditionError
from .market import DistributionSpec, MarketInstance
from .walk import build_walk, max_slice_alpha, slice_decomposition

logger = logging.getLogger(__name__)

ALGORITHMS = ("omniscient", "greedy", "omniscient-penalty", "sorted")
TRIAL_ORDERS = ("random", "ascending", "descending", "as-sampled")
REPORT_HEADER = ["n", "m", "algorithm", "order", "mean_cost", "std_error", "trials", "seed"]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class SupplyRule:
    """How many drivers accompany ``n`` riders.

    ``balanced`` gives ``m = n``; ``eps`` gives ``m = n + ceil(eps * n)``;
    ``extra`` gives ``m = n + value``.
    """

    kind: str = "balanced"
    value: float = 0

    def __post_init__(self):
        if self.kind not in ("balanced", "eps", "extra"):
            raise ConfigError(f"unknown supply rule {self.kind!r}")
        if self.kind == "eps" and not self.value > 0:
            raise ConfigError("epsilon must be > 0")
        if self.kind == "extra" and (int(self.value) != self.value or self.value < 0):
            raise ConfigError("extra drivers must be a non-negative integer")

    @classmethod
    def parse(cls, text):
        """Parse ``balanced``, ``eps:0.2`` or ``extra:5``."""
        if isinstance(text, SupplyRule):
            return text
        text = str(text).strip()
        if text == "balanced":
            return cls()
        kind, _, value = text.partition(":")
        try:
            if kind == "eps":
                return cls("eps", float(value))
            if kind == "extra":
                return cls("extra", int(value))
        except ValueError as exc:
            raise ConfigError(f"bad supply rule {text!r}") from exc
        raise ConfigError(f"bad supply rule {text!r}")

    def drivers_for(self, n):
        if self.kind == "balanced":
            return n
        if self.kind == "extra":
            return n + int(self.value)
        # exact rational so that e.g. 1.2 * 100 does not round up to 121
        return n + math.ceil(Fraction(str(self.value)) * n)

    def __str__(self):
        if self.kind == "balanced":
            return "balanced"
        return f"{self.kind}:{self.value:g}"


@dataclass(frozen=True)
class ExperimentConfig:
    n_grid: tuple
    supply_rule: SupplyRule = field(default_factory=SupplyRule)
    ell: float = 1.0
    trials: int = 100
    master_seed: int = 0
    algorithm: str = "omniscient"
    order_strategy: str = "random"
    nu: Optional[float] = None
    delta: Optional[float] = None
    dist: DistributionSpec = field(default_factory=DistributionSpec.uniform)

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        object.__setattr__(self, "supply_rule", SupplyRule.parse(self.supply_rule))
        if not grid:
            raise ConfigError("n_grid must be nonempty")
        if any(n < 0 for n in grid):
            raise ConfigError("n_grid entries must be >= 0")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("trials must be an integer >= 1")
        if not self.ell > 0:
            raise ConfigError("ell must be > 0")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.order_strategy not in TRIAL_ORDERS:
            raise ConfigError(f"unknown order strategy {self.order_strategy!r}")
        if self.nu is not None and not self.nu >= 0:
            raise ConfigError("nu must be >= 0")
        if self.delta is not None and not 0 < self.delta <= 0.5:
            raise ConfigError("delta must lie in (0, 1/2]")
        if self.algorithm == "omniscient-penalty" and self.nu is None and self.delta is None:
            raise ConfigError("omniscient-penalty needs nu (or delta)")

    def to_dict(self):
        out = asdict(self)
        out["supply_rule"] = str(self.supply_rule)
        out["n_grid"] = list(self.n_grid)
        out["dist"] = self.dist.to_dict()
        return out


@dataclass(frozen=True)
class ReportRow:
    n: int
    m: int
    algorithm: str
    order: str
    mean_cost: float
    std_error: float
    trials: int
    seed: int
    extra: dict = field(default_factory=dict)


@dataclass
class ExperimentReport:
    rows: list
    metadata: dict

    def column(self, name):
        return np.array([getattr(r, name) if name in REPORT_HEADER else r.extra[name] for r in self.rows])

    def to_csv(self, path):
        """Write the rows; ``metadata`` goes to a ``.meta.json`` sidecar."""
        extra_cols = []
        for row in self.rows:
            for key in row.extra:
                if key not in extra_cols:
                    extra_cols.append(key)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_HEADER + extra_cols)
            for row in self.rows:
                base = [getattr(row, k) for k in REPORT_HEADER]
                writer.writerow(
                    [_fmt(v) for v in base] + [_fmt(row.extra.get(k, "")) for k in extra_cols]
                )
        with open(f"{path}.meta.json", "w") as fh:
            json.dump(self.metadata, fh, indent=2, default=str)


def _fmt(value):
    if isinstance(value, float):
        return format(value, ".17g")
    return value


def mean_and_se(values):
    """Sample mean and ``std / sqrt(trials)`` (0 for a single trial)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("no samples")
    mean = float(values.mean())
    if values.size == 1:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / math.sqrt(values.size))


def loglog_slope(ns, means):
    """Least-squares slope of ``log(mean)`` against ``log(n)``."""
    ns = np.asarray(ns, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    if ns.size < 2 or np.any(ns <= 0) or np.any(means <= 0):
        raise ValueError("slope needs at least two positive points")
    return float(np.polyfit(np.log(ns), np.log(means), 1)[0])


def trial_seed(master_seed, n, trial):
    return mix64(master_seed, n, trial)


def draw_positions(n, m, ell, dist, seed):
    """Rider and driver arrays exactly as :func:`sample_instance` draws them."""
    rng = make_rng(seed)
    riders = np.minimum(ell * dist.ppf(rng.random(n)), ell)
    drivers = np.minimum(ell * dist.ppf(rng.random(m)), ell)
    return riders, drivers


def _arrivals(riders, strategy, seed):
    idx = np.arange(riders.size)
    if strategy == "random":
        return riders[make_rng(seed).permutation(riders.size)]
    if strategy == "ascending":
        return riders[np.lexsort((idx, riders))]
    if strategy == "descending":
        return riders[np.lexsort((idx, -riders))]
    return riders


def trial_cost(algorithm, riders, drivers, *, nu=None, arrivals=None):
    """Total cost of one algorithm on raw coordinate arrays."""
    if algorithm == "greedy":
        if drivers.size < riders.size:
            raise PreconditionError("greedy needs m >= n")
        order = riders if arrivals is None else arrivals
        return _kernels.greedy_cost(np.sort(drivers), np.ascontiguousarray(order))
    rs, ds = np.sort(riders), np.sort(drivers)
    if algorithm == "omniscient":
        if ds.size < rs.size:
            raise PreconditionError("omniscient needs m >= n")
        return _kernels.band_cost(rs, ds)
    if algorithm == "sorted":
        if ds.size != rs.size:
            raise PreconditionError("sorted matching needs m == n")
        return _kernels.sorted_cost(rs, ds)
    if algorithm == "omniscient-penalty":
        return _kernels.penalty_cost(rs, ds, float(nu))
    raise ValueError(f"unknown algorithm {algorithm!r}")


def _nu_for(config, n):
    if config.delta is not None:
        return config.ell / n ** (0.5 - config.delta)
    return config.nu


def _run_grid_point(config, n, nu):
    m = config.supply_rule.drivers_for(n)
    costs = np.empty(config.trials)
    for t in range(config.trials):
        seed = trial_seed(config.master_seed, n, t)
        riders, drivers = draw_positions(n, m, config.ell, config.dist, seed)
        arrivals = None
        if config.algorithm == "greedy":
            arrivals = _arrivals(riders, config.order_strategy, mix64(seed, ORDER_STREAM))
        costs[t] = trial_cost(config.algorithm, riders, drivers, nu=nu, arrivals=arrivals)
    mean, se = mean_and_se(costs)
    return ReportRow(
        n=n,
        m=m,
        algorithm=config.algorithm,
        order=config.order_strategy if config.algorithm == "greedy" else "any",
        mean_cost=mean,
        std_error=se,
        trials=config.trials,
        seed=config.master_seed,
    )


def estimate_mean_cost(config):
    """Mean and standard error of the configured algorithm's cost for each ``n``."""
    rows = [_run_grid_point(config, n, _nu_for(config, n)) for n in config.n_grid]
    return ExperimentReport(rows, {"config": config.to_dict(), "version": __version__})


def balanced_closed_form(n, ell=1.0, exact=False):
    """Expected optimal cost with ``n`` riders and ``n`` drivers uniform on ``[0, ell]``.

    ``n 2^(2n-1) / ((2n+1) C(2n, n)) * ell``, evaluated in exact integer
    arithmetic. Returns a ``Fraction`` when ``exact`` (requires rational
    ``ell``), otherwise a correctly rounded float.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        value = Fraction(0)
    else:
        value = Fraction(n * 2 ** (2 * n - 1), (2 * n + 1) * math.comb(2 * n, n))
    if exact:
        return value * Fraction(ell)
    return float(value) * float(ell)


def _augment(report, key_fns):
    for i, row in enumerate(report.rows):
        extra = dict(row.extra)
        for key, fn in key_fns.items():
            extra[key] = fn(row)
        report.rows[i] = ReportRow(**{**asdict(row), "extra": extra})


def scaling_experiment(config):
    """Mean cost over ``n_grid`` with normalized columns and a log-log slope.

    Adds ``mean_over_sqrt_n`` and ``mean_over_log3_n`` columns; the fitted
    slope of ``log(mean)`` on ``log(n)`` is stored in
    ``metadata["loglog_slope"]``.
    """
    grid = sorted(config.n_grid)
    if len(grid) < 3:
        raise ConfigError("scaling needs at least 3 grid points")
    if grid[0] < 2 or grid[-1] < 10 * grid[0]:
        raise ConfigError("scaling grid must span at least one decade with n >= 2")
    report = estimate_mean_cost(config)
    _augment(
        report,
        {
            "mean_over_sqrt_n": lambda r: r.mean_cost / math.sqrt(r.n),
            "mean_over_log3_n": lambda r: r.mean_cost / math.log(r.n) ** 3,
        },
    )
    report.metadata["loglog_slope"] = {
        config.algorithm: loglog_slope(report.column("n"), report.column("mean_cost"))
    }
    return report


def penalty_scaling_experiment(config):
    """Penalized optimal cost on balanced markets with ``nu = ell / n^(1/2 - delta)``."""
    if config.supply_rule.kind != "balanced":
        raise ConfigError("penalty scaling runs on balanced markets")
    if config.delta is None:
        raise ConfigError("penalty scaling needs delta in (0, 1/2]")
    if config.algorithm != "omniscient-penalty":
        config = ExperimentConfig(**{**config.__dict__, "algorithm": "omniscient-penalty"})
    report = estimate_mean_cost(config)
    _augment(report, {"nu": lambda r: _nu_for(config, r.n)})
    if len(report.rows) >= 2:
        report.metadata["loglog_slope"] = {
            config.algorithm: loglog_slope(report.column("n"), report.column("mean_cost"))
        }
    return report


@dataclass(frozen=True)
class CrossoverResult:
    """Smallest excess-driver count at which greedy beats the balanced optimum."""

    n: int
    k_min: int
    mean_greedy: float
    std_error_greedy: float
    mean_omniscient: float
    std_error_diff: float
    trials: int
    seed: int
    resolved: bool

    @property
    def percent_extra(self):
        return 100.0 * self.k_min / self.n


class CrossoverNotFound(RuntimeError):
    pass


def default_crossover_trials(n):
    return 10**4 if n <= 100 else 10**3


def beat_optimal_experiment(n_grid, ell=1.0, trials=None, master_seed=0):
    """Find, for each ``n``, the fewest extra drivers letting greedy beat the optimum.

    Greedy (uniform random arrivals) runs with ``m = n + k`` drivers for
    ``k = 0, 1, ...`` and is compared with the balanced optimal matching on
    the same riders. Randomness is shared across ``k``: each trial keeps its
    riders, arrival order and first ``n`` drivers, and driver ``n + k``
    is the k-th draw of a per-trial extra-driver stream.

    Raises
    ------
    CrossoverNotFound
        If greedy does not win on average for any ``k <= n``.
    """
    results = []
    dist = DistributionSpec.uniform()
    for n in n_grid:
        n = int(n)
        if n < 1:
            raise ConfigError("n must be >= 1")
        t_count = default_crossover_trials(n) if trials is None else int(trials)
        base_d, arrivals, extra = [], [], []
        omn = np.empty(t_count)
        for t in range(t_count):
            seed = trial_seed(master_seed, n, t)
            riders, drivers = draw_positions(n, n, ell, dist, seed)
            omn[t] = _kernels.sorted_cost(np.sort(riders), np.sort(drivers))
            arrivals.append(riders[make_rng(mix64(seed, ORDER_STREAM)).permutation(n)])
            base_d.append(drivers)
            extra.append(ell * make_rng(mix64(seed, EXTRA_DRIVER_STREAM)).random(n))
        mean_omn = float(omn.mean())
        found = None
        for k in range(n + 1):
            greedy = np.empty(t_count)
            for t in range(t_count):
                ds = np.sort(np.concatenate((base_d[t], extra[t][:k])))
                greedy[t] = _kernels.greedy_cost(ds, arrivals[t])
            mean_g = float(greedy.mean())
            if mean_g < mean_omn:
                _, se = mean_and_se(greedy - omn)
                _, se_g = mean_and_se(greedy)
                resolved = (mean_omn - mean_g) > 2 * se
                if not resolved:
                    msg = (
                        f"n={n}: crossover at k={k} is within 2 standard errors "
                        f"(diff={mean_omn - mean_g:.4g}, se={se:.4g}); raise trials"
                    )
                    warnings.warn(msg, RuntimeWarning, stacklevel=2)
                found = CrossoverResult(n, k, mean_g, se_g, mean_omn, se, t_count, master_seed, resolved)
                break
        if found is None:
            raise CrossoverNotFound(f"n={n}: greedy never beat the balanced optimum for k <= n")
        logger.info("n=%d k_min=%d", n, found.k_min)
        results.append(found)
    return results


@dataclass(frozen=True)
class FirstReturnStats:
    mean: float
    std_error: float
    trials: int
    no_return_fraction: float


def first_return_samples(n, m, nu, ell, trials, seed):
    """Per-trial ``min(first return time after 0, nu)``; no return counts as ``nu``."""
    if not nu > 0:
        raise PreconditionError("nu must be > 0")
    dist = DistributionSpec.uniform()
    out = np.empty(trials)
    missing = 0
    for t in range(trials):
        riders, drivers = draw_positions(n, m, ell, dist, trial_seed(seed, n, t))
        walk = build_walk(MarketInstance(riders, drivers, ell))
        running = walk.running_sum()
        hit = np.flatnonzero(running[1:] == 0)
        if hit.size == 0:
            missing += 1
            out[t] = nu
        else:
            out[t] = min(float(walk.positions[hit[0]]), nu)
    return out, missing


def first_return_stats(n, m, nu, ell=1.0, trials=1000, seed=0):
    """Monte Carlo estimate of ``E[min(tau_0, nu)]`` with its standard error."""
    samples, missing = first_return_samples(n, m, nu, ell, trials, seed)
    mean, se = mean_and_se(samples)
    return FirstReturnStats(mean, se, trials, missing / trials)


def _slice_trials(n, eps, ell, trials, seed):
    m = SupplyRule("eps", eps).drivers_for(n)
    dist = DistributionSpec.uniform()
    for t in range(trials):
        riders, drivers = draw_positions(n, m, ell, dist, trial_seed(seed, n, t))
        yield slice_decomposition(build_walk(MarketInstance(riders, drivers, ell)), ell)


def max_slice_exceedance(n, eps, trials, seed=0, ell=1.0):
    """Fraction of trials whose largest slice hop count reaches ``alpha * ln(n)``."""
    threshold = max_slice_alpha(eps) * math.log(n)
    hits = sum(int(dec.slice_hops.max() >= threshold) for dec in _slice_trials(n, eps, ell, trials, seed))
    return hits / trials, threshold


def slice_cost_stats(n, eps, trials, seed=0, ell=1.0):
    """Mean and standard error of ``sum_i hops_i * length_i`` over random markets."""
    values = [dec.weighted_cost() for dec in _slice_trials(n, eps, ell, trials, seed)]
    return mean_and_se(values)


def empirical_slice_hops(n, m, trials, seed=0):
    """Tallies of slice hop counts: array of shape ``(m - n + 1, n + 1)`` over ``k``."""
    counts = np.zeros((m - n + 1, n + 1), dtype=np.int64)
    dist = DistributionSpec.uniform()
    for t in range(trials):
        riders, drivers = draw_positions(n, m, 1.0, dist, trial_seed(seed, n, t))
        dec = slice_decomposition(build_walk(MarketInstance(riders, drivers, 1.0)), 1.0)
        counts[np.arange(m - n + 1), dec.slice_hops // 2] += 1
    return counts


def greedy_locality(n, eps, trials, seed=0, quantile=0.99):
    """Quantile of the distance rank of greedy's chosen driver among all drivers.

    Rank 1 is the rider's nearest driver overall, matched or not.
    """
    m = SupplyRule("eps", eps).drivers_for(n)
    dist = DistributionSpec.uniform()
    ranks = []
    for t in range(trials):
        seed_t = trial_seed(seed, n, t)
        riders, drivers = draw_positions(n, m, 1.0, dist, seed_t)
        arrivals = riders[make_rng(mix64(seed_t, ORDER_STREAM)).permutation(n)]
        ds = np.sort(drivers)
        chosen = _kernels.greedy_assign(ds, arrivals)
        gap = np.abs(ds[chosen] - arrivals)
        # drivers strictly closer than the chosen one, plus one
        lo = np.searchsorted(ds, arrivals - gap, side="right")
        hi = np.searchsorted(ds, arrivals + gap, side="left")
        ranks.append(np.maximum(hi - lo, 0) + 1)
    return float(np.quantile(np.concatenate(ranks), quantile))
