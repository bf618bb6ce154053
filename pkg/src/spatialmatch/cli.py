"""Command-line entry point: ``spatialmatch <subcommand> ...``.

Exit codes: 0 on success, 2 for configuration errors, 3 when an
algorithm's precondition fails (e.g. fewer drivers than riders).
"""

import argparse
import csv
import json
import logging
import sys

from ._validation import PreconditionError
from .experiments import (
    ALGORITHMS,
    REPORT_HEADER,
    ConfigError,
    CrossoverNotFound,
    ExperimentConfig,
    beat_optimal_experiment,
    empirical_slice_hops,
    penalty_scaling_experiment,
    scaling_experiment,
)
from .market import CostModel, DistributionSpec, arrival_order, sample_instance, write_instance_csv
from .offline import (
    matching_cost,
    omniscient_match,
    omniscient_match_with_penalty,
    sorted_match,
    write_matching_csv,
)
from .online import greedy_match
from .walk import ENUMERATION_CAP, enumerate_hop_distribution, slice_hop_pmf

logger = logging.getLogger("spatialmatch")

EXIT_CONFIG = 2
EXIT_PRECONDITION = 3

# built-in values used when neither the config file nor a flag sets an option
DEFAULTS = {
    "n": 10,
    "m": None,
    "ell": 1.0,
    "dist": "uniform",
    "algo": "omniscient",
    "order": "random",
    "nu": None,
    "waiting_cost": 0.0,
    "seed": 0,
    "dump_instance": None,
    "dump_matching": None,
    "n_grid": "100,1000,10000",
    "supply": "balanced",
    "trials": None,
    "delta": None,
    "out": None,
}


def _grid(text):
    try:
        values = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad n grid {text!r}") from exc
    if not values:
        raise ConfigError("n grid is empty")
    return values


def _resolve(args):
    """Merge built-in defaults, the ``--config`` file and explicit flags, in that order."""
    merged = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            if key == "n_grid" and isinstance(value, list):
                value = ",".join(str(v) for v in value)
            merged[key] = value
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return argparse.Namespace(**merged)


def _load_dist(spec):
    if spec == "uniform":
        return DistributionSpec.uniform()
    try:
        return DistributionSpec.load(spec)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load distribution {spec!r}: {exc}") from exc


def _write_rows(path, header, rows):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if path:
            fh.close()


def cmd_simulate(opts):
    if opts.algo not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {opts.algo!r}")
    m = opts.n if opts.m is None else opts.m
    dist = _load_dist(opts.dist)
    try:
        instance = sample_instance(int(opts.n), int(m), float(opts.ell), dist, int(opts.seed))
        cost_model = CostModel(float(opts.waiting_cost), opts.nu)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    strategy = "exhaustive-worst" if opts.order == "worst" else opts.order
    if opts.algo == "greedy":
        order = arrival_order(instance, strategy, seed=int(opts.seed))
        outcome = greedy_match(instance, order, cost_model)
        matching, total = outcome.matching, outcome.total_cost
    else:
        if opts.algo == "omniscient":
            matching = omniscient_match(instance)
        elif opts.algo == "sorted":
            matching = sorted_match(instance)
        else:
            if opts.nu is None:
                raise ConfigError("omniscient-penalty needs --nu")
            matching = omniscient_match_with_penalty(instance, float(opts.nu))
        total = matching_cost(matching, cost_model)
        strategy = "any"
    if opts.dump_instance:
        write_instance_csv(instance, opts.dump_instance)
    if opts.dump_matching:
        write_matching_csv(matching, opts.dump_matching)
    _write_rows(
        opts.out,
        ["n", "m", "algorithm", "order", "total_distance", "total_penalty", "total_cost", "unmatched", "seed"],
        [[
            instance.n,
            instance.m,
            opts.algo,
            strategy,
            format(matching.total_distance, ".17g"),
            format(matching.total_penalty, ".17g"),
            format(total, ".17g"),
            matching.unmatched_riders.size,
            opts.seed,
        ]],
    )


def _config(opts, **overrides):
    fields = dict(
        n_grid=_grid(opts.n_grid),
        supply_rule=opts.supply,
        ell=float(opts.ell),
        trials=100 if opts.trials is None else int(opts.trials),
        master_seed=int(opts.seed),
        algorithm=opts.algo,
        order_strategy=opts.order,
        nu=None if opts.nu is None else float(opts.nu),
        delta=None if opts.delta is None else float(opts.delta),
        dist=_load_dist(opts.dist),
    )
    fields.update(overrides)
    return ExperimentConfig(**fields)


def _emit_report(report, opts):
    if opts.out:
        report.to_csv(opts.out)
    else:
        _write_rows(None, REPORT_HEADER, [[getattr(r, k) for k in REPORT_HEADER] for r in report.rows])
    for algo, slope in report.metadata.get("loglog_slope", {}).items():
        print(f"# log-log slope ({algo}): {slope:.4f}", file=sys.stderr)


def cmd_scaling(opts):
    _emit_report(scaling_experiment(_config(opts)), opts)


def cmd_penalty_scaling(opts):
    if opts.delta is None:
        raise ConfigError("penalty-scaling needs --delta")
    _emit_report(
        penalty_scaling_experiment(_config(opts, algorithm="omniscient-penalty", supply_rule="balanced")),
        opts,
    )


def cmd_beat_optimal(opts):
    trials = None if opts.trials is None else int(opts.trials)
    results = beat_optimal_experiment(
        _grid(opts.n_grid), ell=float(opts.ell), trials=trials, master_seed=int(opts.seed)
    )
    header = REPORT_HEADER + ["k_min", "percent_extra", "mean_omniscient", "std_error_diff", "resolved"]
    rows = [
        [
            r.n, r.n + r.k_min, "greedy", "random", format(r.mean_greedy, ".17g"),
            format(r.std_error_greedy, ".17g"), r.trials, r.seed, r.k_min,
            format(r.percent_extra, ".6g"), format(r.mean_omniscient, ".17g"),
            format(r.std_error_diff, ".17g"), int(r.resolved),
        ]
        for r in results
    ]
    _write_rows(opts.out, header, rows)


def cmd_walk_stats(opts):
    n = int(opts.n)
    m = n if opts.m is None else int(opts.m)
    if n < 0 or m < n:
        raise PreconditionError(f"walk-stats needs 0 <= n <= m, got n={n}, m={m}")
    trials = 1000 if opts.trials is None else int(opts.trials)
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    counts = empirical_slice_hops(n, m, trials, int(opts.seed))
    enumerate_ok = n + m <= ENUMERATION_CAP
    rows = []
    for i in range(m - n + 1):
        exact = slice_hop_pmf(n, m, i)
        enum = enumerate_hop_distribution(n, m, i) if enumerate_ok else None
        for k in range(n + 1):
            rows.append([
                i, k, 2 * k,
                format(counts[i, k] / trials, ".17g"),
                format(float(exact[2 * k]), ".17g"),
                "" if enum is None else format(float(enum[2 * k]), ".17g"),
            ])
    _write_rows(opts.out, ["slice", "k", "hops", "empirical", "exact", "enumerated"], rows)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spatialmatch", description="Spatial matching market simulations on an interval."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *names):
        p.add_argument("--config", help="JSON file of option values; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output CSV (default: stdout)")
        for name in names:
            if name == "n":
                p.add_argument("--n", type=int)
            elif name == "m":
                p.add_argument("--m", type=int)
            elif name == "ell":
                p.add_argument("--ell", type=float)
            elif name == "trials":
                p.add_argument("--trials", type=int)
            elif name == "n_grid":
                p.add_argument("--n-grid", dest="n_grid", help="comma-separated rider counts")
            elif name == "algo":
                p.add_argument("--algo", choices=ALGORITHMS)
            elif name == "order":
                p.add_argument("--order", choices=("random", "ascending", "descending", "as-sampled", "worst"))
            elif name == "nu":
                p.add_argument("--nu", type=float)
            elif name == "dist":
                p.add_argument("--dist", help="'uniform' or a distribution JSON file")

    p = sub.add_parser("simulate", help="run one algorithm on one sampled instance")
    common(p, "n", "m", "ell", "dist", "algo", "order", "nu")
    p.add_argument("--waiting-cost", dest="waiting_cost", type=float)
    p.add_argument("--dump-instance", dest="dump_instance")
    p.add_argument("--dump-matching", dest="dump_matching")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scaling", help="mean cost over a grid of market sizes")
    common(p, "n_grid", "ell", "trials", "algo", "order", "nu", "dist")
    p.add_argument("--supply", help="balanced, eps:X or extra:K")
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("beat-optimal", help="extra drivers needed for greedy to beat the optimum")
    common(p, "n_grid", "ell", "trials")
    p.set_defaults(func=cmd_beat_optimal)

    p = sub.add_parser("penalty-scaling", help="penalized optimal cost with nu = ell / n^(1/2 - delta)")
    common(p, "n_grid", "ell", "trials", "dist")
    p.add_argument("--delta", type=float)
    p.set_defaults(func=cmd_penalty_scaling)

    p = sub.add_parser("walk-stats", help="slice hop-count PMFs: empirical, exact, enumerated")
    common(p, "n", "m", "trials")
    p.set_defaults(func=cmd_walk_stats)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        opts = _resolve(args)
        args.func(opts)
    except (ConfigError, ValueError, TypeError) as exc:
        if isinstance(exc, PreconditionError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PRECONDITION
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CrossoverNotFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    return 0


if __name__ == "__main__":
    sys.exit(main())
