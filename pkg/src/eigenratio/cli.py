"""Command-line interface.

Exit status: 0 success, 1 input/output error, 2 usage error, 3 numerical
failure (eigensolver, degenerate spectrum, calibration).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .blockmodels import DENSITIES, MODELS, ProbabilityError, ScenarioKind, make_spec, sample_graph
from .experiments import (
    ExperimentFailure,
    ExperimentPlan,
    full_plan,
    records_to_json,
    run_size_power,
    write_manifest,
)
from .graph import (
    EdgeListParseError,
    graph_stats,
    largest_connected_component,
    read_edge_list,
    write_edge_list,
)
from .inference import (
    CalibrationStore,
    DegenerateGapError,
    MissingCalibrationError,
    TestConfig,
    calibrate,
    estimate_k,
    estimate_k_threshold,
    parallel_analysis,
    test_k0,
)
from .spectra import EigensolverError

log = logging.getLogger("eigenratio")

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
CACHE_ENV = "EIGENRATIO_CACHE"


class UsageError(Exception):
    pass


def default_cache_dir():
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "eigenratio"


def _positive(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def _unit(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {v}")
    return v


def read_key_values(path):
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _apply_config(args, keys):
    """Fill unset scenario flags from ``--config``."""
    if getattr(args, "config", None) is None:
        return
    conf = read_key_values(args.config)
    unknown = set(conf) - set(keys)
    if unknown:
        raise UsageError(f"unknown keys in {args.config}: {', '.join(sorted(unknown))}")
    for key, conv in keys.items():
        if key in conf and getattr(args, key, None) is None:
            setattr(args, key, conv(conf[key]))


def _int_list(text):
    return [int(x) for x in str(text).replace(",", " ").split()]


def _test_config(args, **extra):
    params = dict(
        alpha=getattr(args, "alpha", 0.05),
        j_reps=getattr(args, "j", 1000),
        kmax=getattr(args, "kmax", None),
        pa_reps=getattr(args, "b", 50),
        pa_quantile=getattr(args, "q", 0.95),
        pa_cap=getattr(args, "cap", None),
        seed=args.seed,
        nearest_n=getattr(args, "nearest_n", False),
        n_jobs=args.threads,
    )
    params.update(extra)
    return TestConfig(**params)


def _load_graph(args):
    g = read_edge_list(args.input, directed=args.directed, mode=args.mode, one_based=args.one_based)
    if args.lcc:
        g = largest_connected_component(g)
    return g


def _sidecar(args, suffix):
    if getattr(args, "record", None):
        return Path(args.record)
    return Path(f"{args.input}.{suffix}.json")


def _write_record(path, record):
    Path(path).write_text(json.dumps(record, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _manifest_for(path):
    return Path(f"{path}.manifest")


def _params(args):
    skip = {"func", "command", "verbose"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in skip}


def _outcome_dict(o):
    return {
        "k0": o.k0,
        "kmax": o.kmax,
        "statistic": o.statistic,
        "critical": o.critical,
        "reject": o.reject,
        "eigenvalues_used": {str(k): v for k, v in o.eigenvalues_used.items()},
    }


def cmd_generate(args):
    _apply_config(args, {"model": str, "density": str, "n": int, "k": int, "seed": int})
    for key in ("model", "density", "n", "k"):
        if getattr(args, key) is None:
            raise UsageError(f"--{key} is required (flag or --config)")
    if args.seed is None:
        args.seed = 0
    if args.n < 2 or args.k < 1 or args.k > args.n:
        raise UsageError("need n >= 2 and 1 <= k <= n")
    kind = ScenarioKind(args.model, args.density)
    spec = make_spec(kind, args.n, args.k, seed=args.seed, normalize=args.normalize)
    g = sample_graph(spec, args.seed)
    write_edge_list(g, args.output)
    meta = {k: (v if not isinstance(v, np.ndarray) else v.tolist()) for k, v in spec.metadata.items()}
    sizes = np.bincount(spec.memberships()[spec.profiles.max(axis=1) == 1.0], minlength=spec.k)
    params = _params(args)
    params["spec"] = {
        "model": spec.model,
        "n": spec.n,
        "k": spec.k,
        "q": [repr(float(x)) for x in spec.q.ravel()],
        "pure_sizes": sizes.tolist(),
        "degree_mean": repr(float(spec.degrees.mean())),
        **meta,
    }
    write_manifest(_manifest_for(args.output), "generate", params, [args.output], args.seed)
    st = graph_stats(g)
    print(f"wrote {args.output}: n={st.n} edges={st.edge_count} density={st.edge_density:.6f}")
    if spec.model == "dcmm":
        print(f"pure nodes per community: {meta.get('pure_per_community')}")
    return EXIT_OK


def cmd_calibrate(args):
    cfg = _test_config(args, sampler=args.sampler)
    if args.d < 2:
        raise UsageError("--d must be >= 2")
    if args.n < args.d + 2:
        raise UsageError("--n must be at least d + 2")
    store = CalibrationStore(args.cache_dir)
    table = store.get(args.n, args.d, cfg)
    path = store.directory / table.filename()
    if args.output:
        table.save(args.output)
        path = Path(args.output)
    write_manifest(_manifest_for(path), "calibrate", _params(args), [path], args.seed)
    r = round((1 - cfg.alpha) * table.J)
    print(f"table: {path}")
    print(f"n={table.n} d={table.d} J={table.J} seed={table.seed} sampler={table.sampler}")
    print(f"critical value (alpha={cfg.alpha}, order statistic {r}): {table.critical_value(cfg.alpha)!r}")
    return EXIT_OK


def cmd_pa(args):
    g = _load_graph(args)
    cfg = _test_config(args)
    res = parallel_analysis(g, cfg, return_details=True)
    print(f"n={g.n} B={res.reps} q={res.level} C={res.cap}")
    print(f"{'j':>4} {'lambda_j':>14} {'q_j':>14}  exceeds")
    for j, (lam, q) in enumerate(zip(res.observed, res.quantiles), 1):
        print(f"{j:>4} {lam:>14.6f} {q:>14.6f}  {'yes' if lam > q else 'no'}")
    print(f"K_PA = {res.k_pa}")
    rec = {
        "command": "pa",
        "n": g.n,
        "k_pa": res.k_pa,
        "eigenvalues": res.observed.tolist(),
        "quantiles": res.quantiles.tolist(),
        "reps": res.reps,
        "quantile": res.level,
        "seed": args.seed,
    }
    out = _sidecar(args, "pa")
    _write_record(out, rec)
    write_manifest(_manifest_for(out), "pa", _params(args), [out], args.seed)
    return EXIT_OK


def _store_for(args):
    return CalibrationStore(args.cache_dir, auto=not args.no_auto_calibrate)


def _print_path(path):
    print(f"{'K0':>4} {'statistic':>14} {'critical':>12}  decision")
    for o in path:
        print(f"{o.k0:>4} {o.statistic:>14.4f} {o.critical:>12.4f}  {'reject' if o.reject else 'accept'}")


def cmd_test(args):
    g = _load_graph(args)
    cfg = _test_config(args)
    out = test_k0(g, args.k0, cfg, store=_store_for(args))
    print(f"n={g.n} K0={out.k0} Kmax={out.kmax} alpha={cfg.alpha}")
    _print_path([out])
    rec = {"command": "test", "n": g.n, "seed": args.seed, "outcome": _outcome_dict(out)}
    path = _sidecar(args, "test")
    _write_record(path, rec)
    write_manifest(_manifest_for(path), "test", _params(args), [path], args.seed)
    return EXIT_OK


def cmd_estimate(args):
    g = _load_graph(args)
    cfg = _test_config(args)
    if args.method == "threshold":
        res = estimate_k_threshold(g, args.epsilon, cfg)
    else:
        res = estimate_k(g, cfg, _store_for(args))
    pa = "fixed" if res.k_pa is None else str(res.k_pa)
    print(f"n={g.n} edges={g.edge_count} method={res.method} K_PA={pa} Kmax={res.kmax}")
    if res.kmax_capped:
        print(f"note: Kmax capped at {res.kmax}")
    _print_path(res.path)
    print(f"k_hat = {res.label()}")
    if res.saturated:
        print(f"note: every K0 up to {res.kmax - 2} was rejected; consider a larger --kmax")
    rec = {
        "command": "estimate",
        "n": g.n,
        "seed": args.seed,
        "method": res.method,
        "k_hat": res.k_hat,
        "label": res.label(),
        "saturated": res.saturated,
        "kmax": res.kmax,
        "k_pa": res.k_pa,
        "kmax_capped": res.kmax_capped,
        "path": [_outcome_dict(o) for o in res.path],
    }
    path = _sidecar(args, "estimate")
    _write_record(path, rec)
    write_manifest(_manifest_for(path), "estimate", _params(args), [path], args.seed)
    return EXIT_OK


def cmd_simulate(args):
    _apply_config(
        args,
        {"model": str, "density": str, "n": int, "k": _int_list, "k0": _int_list, "reps": int, "seed": int},
    )
    args.model = args.model or "sbm"
    args.density = args.density or "dense"
    args.seed = 0 if args.seed is None else args.seed
    kind = ScenarioKind(args.model, args.density)
    cfg = _test_config(args, kmax=None)
    if args.full:
        plan = full_plan(kind, args.seed)
        plan = dataclasses.replace(plan, config=dataclasses.replace(cfg, seed=args.seed))
    else:
        plan = ExperimentPlan(
            kind,
            args.n or 1000,
            k_true=tuple(args.k or (3, 5, 10)),
            k0=tuple(args.k0 or (1, 2, 3)),
            reps=args.reps or 200,
            alpha=cfg.alpha,
            seed=args.seed,
            epsilon=args.epsilon,
            config=cfg,
        )
    table, records = run_size_power(plan, CalibrationStore(args.cache_dir), return_records=True)
    sys.stdout.write(table.to_tsv())
    Path(args.output).write_text(table.to_tsv(), encoding="utf-8")
    outputs = [args.output]
    if args.records:
        flat = [r for k in plan.k_true for r in records[k]]
        Path(args.records).write_text(records_to_json(flat) + "\n", encoding="utf-8")
        outputs.append(args.records)
    params = _params(args)
    params["plan"] = plan.to_dict()
    write_manifest(_manifest_for(args.output), "simulate", params, outputs, args.seed)
    if table.failed:
        print(f"warning: {table.failed} replicate(s) failed and were excluded", file=sys.stderr)
    return EXIT_OK


def cmd_ingest(args):
    g = _load_graph(args)
    write_edge_list(g, args.output)
    labels = Path(f"{args.output}.labels")
    labels.write_text("".join(f"{i}\t{lab}\n" for i, lab in enumerate(g.labels)), encoding="utf-8")
    write_manifest(_manifest_for(args.output), "ingest", _params(args), [args.output, labels])
    st = graph_stats(g)
    print(
        f"n={st.n} edges={st.edge_count} density={st.edge_density:.6f} "
        f"max_degree={st.max_degree} mean_degree={st.mean_degree:.3f}"
    )
    return EXIT_OK


def _add_common(p, seed_default=0):
    p.add_argument("--seed", type=_seed, default=seed_default, help="64-bit master seed (default: %(default)s)")
    p.add_argument("--threads", type=_positive, default=1, help="worker cap; results do not depend on it (default: %(default)s)")


def _add_input(p):
    p.add_argument("input", type=Path, help="edge-list file (one 'i j' pair per line)")
    p.add_argument("--directed", action="store_true", help="treat pairs as directed and symmetrize (default: off)")
    p.add_argument("--mode", choices=("mutual", "union"), default="mutual", help="symmetrization for --directed (default: %(default)s)")
    p.add_argument("--one-based", action="store_true", help="node ids start at 1 (default: off)")
    p.add_argument("--lcc", action="store_true", help="restrict to the largest connected component (default: off)")


def _add_pa(p):
    p.add_argument("--b", type=_positive, default=50, help="permutation replicates B (default: %(default)s)")
    p.add_argument("--q", type=_unit, default=0.95, help="reference quantile (default: %(default)s)")
    p.add_argument("--cap", type=_positive, default=None, help="eigenvalues examined (default: floor(sqrt(n)))")


def _add_test(p):
    p.add_argument("--alpha", type=_unit, default=0.05, help="nominal level (default: %(default)s)")
    p.add_argument("--j", type=_positive, default=1000, help="GOE calibration replicates J (default: %(default)s)")
    p.add_argument("--kmax", type=_positive, default=None, help="fixed Kmax, bypassing parallel analysis (default: K_PA + 5)")
    p.add_argument("--cache-dir", type=Path, default=None, help=f"calibration cache (default: ${CACHE_ENV} or ~/.cache/eigenratio)")
    p.add_argument("--nearest-n", action="store_true", help="reuse a table within 10%% of n (default: off)")
    p.add_argument("--no-auto-calibrate", action="store_true", help="fail instead of calibrating missing tables (default: off)")
    p.add_argument("--record", type=Path, default=None, help="machine-readable record path (default: INPUT.<command>.json)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="eigenratio",
        description="Estimate the number of communities with the eigengap-ratio test.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("generate", help="sample a block-model graph")
    p.add_argument("--model", choices=MODELS, default=None, help="block model (required)")
    p.add_argument("--density", choices=DENSITIES, default=None, help="dense or sparse regime (required)")
    p.add_argument("--n", type=_positive, default=None, help="number of nodes (required)")
    p.add_argument("--k", type=_positive, default=None, help="number of communities (required)")
    p.add_argument("--normalize", action="store_true", help="rescale degree parameters to mean 1 (default: off)")
    p.add_argument("--config", type=Path, default=None, help="key = value scenario file; flags take precedence")
    p.add_argument("-o", "--output", type=Path, required=True, help="edge-list output path")
    p.add_argument("--seed", type=_seed, default=None, help="64-bit master seed (default: 0)")
    p.add_argument("--threads", type=_positive, default=1, help="worker cap (default: %(default)s)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("calibrate", help="build a GOE calibration table")
    p.add_argument("--n", type=_positive, required=True, help="matrix dimension")
    p.add_argument("--d", type=_positive, required=True, help="Kmax - K0 (>= 2)")
    p.add_argument("--j", type=_positive, default=1000, help="GOE replicates J (default: %(default)s)")
    p.add_argument("--alpha", type=_unit, default=0.05, help="level for the reported critical value (default: %(default)s)")
    p.add_argument("--sampler", choices=("tridiagonal", "dense"), default="tridiagonal", help="GOE sampler (default: %(default)s)")
    p.add_argument("--cache-dir", type=Path, default=None, help=f"table directory (default: ${CACHE_ENV} or ~/.cache/eigenratio)")
    p.add_argument("-o", "--output", type=Path, default=None, help="also write the table here")
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("pa", help="parallel analysis for K_PA")
    _add_input(p)
    _add_pa(p)
    p.add_argument("--record", type=Path, default=None, help="machine-readable record path (default: INPUT.pa.json)")
    _add_common(p)
    p.set_defaults(func=cmd_pa)

    p = sub.add_parser("test", help="test H0: K = K0")
    _add_input(p)
    p.add_argument("--k0", type=_positive, required=True, help="hypothesized number of communities")
    _add_test(p)
    _add_pa(p)
    _add_common(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("estimate", help="estimate the number of communities")
    _add_input(p)
    p.add_argument("--method", choices=("quantile", "threshold"), default="quantile", help="decision rule (default: %(default)s)")
    p.add_argument("--epsilon", type=float, default=0.4, help="threshold exponent, t_n = n**epsilon (default: %(default)s)")
    _add_test(p)
    _add_pa(p)
    _add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="empirical size and power table")
    p.add_argument("--model", choices=MODELS, default=None, help="block model (default: sbm)")
    p.add_argument("--density", choices=DENSITIES, default=None, help="regime (default: dense)")
    p.add_argument("--n", type=_positive, default=None, help="number of nodes (default: 1000)")
    p.add_argument("--k", type=_positive, nargs="+", default=None, help="true K values (default: 3 5 10)")
    p.add_argument("--k0", type=_positive, nargs="+", default=None, help="hypothesized K0 values (default: 1 2 3)")
    p.add_argument("--reps", type=_positive, default=None, help="replicates per K (default: 200)")
    p.add_argument("--alpha", type=_unit, default=0.05, help="nominal level (default: %(default)s)")
    p.add_argument("--epsilon", type=float, default=0.4, help="threshold exponent recorded in the plan (default: %(default)s)")
    p.add_argument("--j", type=_positive, default=1000, help="GOE calibration replicates J (default: %(default)s)")
    _add_pa(p)
    p.add_argument("--full", action="store_true", help="full-scale grid: n=3000, K up to 20, 500 replicates (hours)")
    p.add_argument("--config", type=Path, default=None, help="key = value scenario file; flags take precedence")
    p.add_argument("--cache-dir", type=Path, default=None, help=f"calibration cache (default: ${CACHE_ENV} or ~/.cache/eigenratio)")
    p.add_argument("-o", "--output", type=Path, required=True, help="TSV output path")
    p.add_argument("--records", type=Path, default=None, help="per-replicate JSON records (default: none)")
    p.add_argument("--seed", type=_seed, default=None, help="64-bit master seed (default: 0)")
    p.add_argument("--threads", type=_positive, default=1, help="worker cap; results do not depend on it (default: %(default)s)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="clean an edge list into canonical form")
    _add_input(p)
    p.add_argument("-o", "--output", type=Path, required=True, help="canonical edge-list output path")
    p.set_defaults(func=cmd_ingest)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if hasattr(args, "cache_dir") and args.cache_dir is None:
        args.cache_dir = default_cache_dir()
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"eigenratio: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, EdgeListParseError) as exc:
        print(f"eigenratio: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EigensolverError, DegenerateGapError, MissingCalibrationError, ProbabilityError,
            ExperimentFailure) as exc:
        print(f"eigenratio: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"eigenratio: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
