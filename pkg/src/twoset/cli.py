"""Command-line interface.

Every command writes its machine-readable outputs (CSV with 17 significant
digits, JSON or JSON lines) into ``--out-dir`` together with a
``manifest.json`` that records the configuration, the seed, the package
version and the SHA-256 of every input file.

Exit codes: 0 success, 1 usage, 2 input/output, 3 enumeration guard,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import DataError, build_geyser, from_labelled_table, load_csv, partition_diabetes, standardize
from .gibbs import SamplerError, batch_means_se, gibbs_run, pe_posterior
from .hyperg import QuadratureError
from .linmodel import BACKWARD, FORWARD, ModelPair, RankDeficientError
from .montecarlo import load_suite, run_suite
from .search import (EnumerationError, ModelSpaceCache, compare_approaches, compat_table,
                     comparison_models, default_jobs, mlsel, similarity_search,
                     summarize_differences)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_GUARD, EXIT_NUMERIC = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def load_schema(name: str) -> dict:
    """JSON schema shipped with the package for output ``name`` (e.g. ``"search_line"``)."""
    text = resources.files("twoset").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, Path):
        return str(x)
    return x


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def write_json(path: Path, obj):
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_jsonl(path: Path, objs):
    with open(path, "w") as fh:
        for o in objs:
            fh.write(json.dumps(_jsonable(o), sort_keys=True) + "\n")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: Path, args, inputs, outputs):
    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": [str(o) for o in outputs],
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    write_json(out_dir / "manifest.json", manifest)


def load_data(args):
    if args.data is None:
        raise UsageError("--data is required")
    path = Path(args.data)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    table = load_csv(path)
    if args.kind == "diabetes":
        data = partition_diabetes(table)
    elif args.kind == "geyser":
        data = build_geyser(table)
    else:
        if not args.label_column:
            raise UsageError("--kind generic needs --label-column")
        data = from_labelled_table(table, args.label_column, args.response, args.log_response)
    return standardize(data), [path]


def _columns(data, text: str | None) -> tuple[int, ...]:
    if text is None or text.strip() in ("", "-"):
        return ()
    try:
        return tuple(data.column_index(p.strip()) for p in text.split(",") if p.strip())
    except DataError as exc:
        raise UsageError(str(exc)) from None


def _set_label(names) -> str:
    return "(" + ", ".join(names) + ")" if names else "()"


def _out_dir(args) -> Path:
    p = Path(args.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _threads(args) -> int:
    t = args.threads if args.threads is not None else default_jobs()
    if t < 1:
        raise UsageError("--threads must be at least 1")
    return t


def cmd_compat(args) -> int:
    data, inputs = load_data(args)
    if args.predictors is None:
        K = data.n_predictors
        if K > 6:
            raise UsageError("give --predictors explicitly for more than six candidate columns")
        sets = [tuple(i for i in range(K) if m >> i & 1) for m in range(1 << K)]
        sets.sort(key=lambda s: (len(s), s))
    else:
        sets = [_columns(data, s) for s in args.predictors]
    rows = compat_table(data, sets)
    out = _out_dir(args)
    header = ["predictors", "direction", "term1", "term2", "term3", "total"]
    table = [[_set_label(r.predictors), r.breakdown.label, r.breakdown.term1, r.breakdown.term2,
              r.breakdown.term3, r.breakdown.total] for r in rows]
    write_csv(out / "compat.csv", header, table)
    write_json(out / "compat.json", {"rows": [r.as_dict() for r in rows]})
    write_manifest(out, args, inputs, ["compat.csv", "compat.json"])
    print(f"{'predictors':<24}{'dir':<8}{'term1':>10}{'term2':>10}{'term3':>10}{'total':>10}")
    for r in table:
        print(f"{r[0]:<24}{r[1]:<8}" + "".join(f"{v:>10.5f}" for v in r[2:]))
    return EXIT_OK


def _search_rows(results):
    for r in results:
        f, b = r.pe_forward, r.pe_backward
        yield [r.rank, ";".join(map(str, r.common)), _set_label(r.names), r.objective_value,
               r.pe_total, f.term1, f.term2, f.term3, f.total, b.term1, b.term2, b.term3, b.total]


def cmd_search(args) -> int:
    data, inputs = load_data(args)
    cache = ModelSpaceCache(data)
    results = similarity_search(cache, min_common=args.min_common, max_common=args.max_common,
                                objective=args.objective, family=args.family,
                                n_jobs=_threads(args))
    shown = results if args.top is None else results[: args.top]
    out = _out_dir(args)
    header = ["rank", "common", "names", "objective_value", "pe_total",
              "fwd_term1", "fwd_term2", "fwd_term3", "fwd_total",
              "bwd_term1", "bwd_term2", "bwd_term3", "bwd_total"]
    write_csv(out / "search.csv", header, _search_rows(shown))
    write_jsonl(out / "search.jsonl", [r.as_dict() for r in shown])
    write_manifest(out, args, inputs, ["search.csv", "search.jsonl"])
    print(f"{len(results)} common sets evaluated ({args.objective}); best {min(len(shown), 10)}:")
    for r in shown[:10]:
        print(f"{r.rank:>5}  {_set_label(r.names):<40}{r.objective_value:.6f}")
    return EXIT_OK


def cmd_mlsel(args) -> int:
    data, inputs = load_data(args)
    cache = ModelSpaceCache(data)
    datasets = (0, 1) if args.dataset is None else (args.dataset,)
    out = _out_dir(args)
    rows, docs = [], []
    for j in datasets:
        res = mlsel(cache, j)
        docs.append(res.as_dict(args.top))
        rk = res.ranking if args.top is None else res.ranking[: args.top]
        names = data.columns
        for i, (cols, lm) in enumerate(rk, start=1):
            rows.append([j, i, ";".join(map(str, cols)), _set_label([names[c] for c in cols]), lm])
        print(f"dataset {j}: best {_set_label(res.names)}")
    write_csv(out / "mlsel.csv", ["dataset", "rank", "columns", "names", "log_marginal"], rows)
    write_json(out / "mlsel.json", {"results": docs})
    write_manifest(out, args, inputs, ["mlsel.csv", "mlsel.json"])
    return EXIT_OK


def cmd_mcmc(args) -> int:
    data, inputs = load_data(args)
    pair = ModelPair(_columns(data, args.common), _columns(data, args.specific0),
                     _columns(data, args.specific1))
    draws = gibbs_run(pair, data, iters=args.iters, burnin=args.burnin, seed=args.seed)
    out = _out_dir(args)
    draws.to_csv(out / "draws.csv")
    summary = {"pair": {"common": list(pair.common), "specific0": list(pair.specific0),
                        "specific1": list(pair.specific1)},
               "iters": args.iters, "burnin": args.burnin, "seed": args.seed,
               "acceptance_rate": draws.acceptance_rate.tolist(), "parameters": {}}
    for name, x in (("sigma0_sq", draws.sigma_sq[:, 0]), ("sigma1_sq", draws.sigma_sq[:, 1]),
                    ("sigma_eta_sq", draws.sigma_eta_sq)):
        summary["parameters"][name] = {"mean": float(x.mean()), "sd": float(x.std(ddof=1)),
                                       "median": float(np.median(x)),
                                       "mc_se": float(batch_means_se(x))}
    pe = {}
    for tag, d in (("forward", FORWARD), ("backward", BACKWARD), ("total", None)):
        p = pe_posterior(draws, pair, data, d)
        pe[tag] = {"mean": p.mean, "sd": p.sd, "median": p.median}
    summary["pe"] = pe
    write_json(out / "mcmc.json", summary)
    write_manifest(out, args, inputs, ["draws.csv", "mcmc.json"])
    print(f"acceptance {draws.acceptance_rate.round(3).tolist()}; "
          f"sigma_eta^2 mean {summary['parameters']['sigma_eta_sq']['mean']:.6f}; "
          f"PE total mean {pe['total']['mean']:.6f} (sd {pe['total']['sd']:.6f})")
    return EXIT_OK


def cmd_compare(args) -> int:
    data, inputs = load_data(args)
    n_models = len(comparison_models(data.n_predictors, args.min_common))
    print(f"{n_models} models with more than {args.min_common} common predictors")
    recs = compare_approaches(data, min_common=args.min_common, iters=args.iters,
                              burnin=args.burnin, seed=args.seed, subset_size=args.models,
                              n_jobs=_threads(args))
    out = _out_dir(args)
    docs = [r.as_dict() for r in recs]
    header = list(docs[0].keys())
    write_csv(out / "compare.csv", header,
              [[";".join(map(str, v)) if isinstance(v, list) else v for v in d.values()] for d in docs])
    summary = {"n_family": n_models, "n_evaluated": len(recs),
               "differences": summarize_differences(recs)}
    write_json(out / "compare_summary.json", summary)
    write_manifest(out, args, inputs, ["compare.csv", "compare_summary.json"])
    for k, s in summary["differences"].items():
        print(f"{k:<14} median diff {s['median']:+.5f}  q3 {s['q3']:+.5f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.config is None:
        raise UsageError("simulate needs --config")
    path = Path(args.config)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        configs, tol = load_suite(path)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: malformed simulation config ({exc})") from None
    rows = run_suite(configs, tolerance_se=tol)
    out = _out_dir(args)
    report = {"tolerance_se": tol, "all_pass": all(r["pass"] for r in rows), "checks": rows,
              "configs": [c.to_dict() for c in configs]}
    write_json(out / "simulate.json", report)
    write_manifest(out, args, [path], ["simulate.json"])
    for r in rows:
        print(f"config {r['config']:>3} {r['direction']}  closed {r['closed_form']:.6f}  "
              f"MC {r['mc_mean']:.6f} ± {r['mc_se']:.6f}  z {r['z']:+.2f}  "
              f"{'PASS' if r['pass'] else 'FAIL'}")
    print("all checks pass" if report["all_pass"] else "some checks FAILED")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--data", help="input CSV file")
    common.add_argument("--kind", choices=("geyser", "diabetes", "generic"), default="generic")
    common.add_argument("--label-column", help="0/1 dataset label column (generic kind)")
    common.add_argument("--response", help="response column (generic kind; default last)")
    common.add_argument("--log-response", action="store_true", help="log the response (generic kind)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: available cores)")

    p = _Parser(prog="twoset", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"twoset {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("compat", parents=[common], help="error table with shared predictors")
    s.add_argument("--predictors", nargs="*", default=None,
                   help="predictor sets, each comma-separated (use '-' for the empty set)")
    s.set_defaults(func=cmd_compat)

    s = sub.add_parser("search", parents=[common], help="rank candidate common predictor sets")
    s.add_argument("--min-common", type=int, default=1)
    s.add_argument("--max-common", type=int, default=None)
    s.add_argument("--objective", choices=("sum", "maxmin"), default="sum")
    s.add_argument("--family", choices=("independent", "disjoint"), default="independent")
    s.add_argument("--top", type=int, default=None, help="rows written (computation is complete)")
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("mlsel", parents=[common], help="best subset by marginal likelihood")
    s.add_argument("--dataset", type=int, choices=(0, 1), default=None)
    s.add_argument("--top", type=int, default=None)
    s.set_defaults(func=cmd_mlsel)

    s = sub.add_parser("mcmc", parents=[common], help="Gibbs sampler for one model pair")
    s.add_argument("--common", default=None, help="comma-separated common predictors")
    s.add_argument("--specific0", default=None)
    s.add_argument("--specific1", default=None)
    s.add_argument("--iters", type=int, default=20000)
    s.add_argument("--burnin", type=int, default=5000)
    s.set_defaults(func=cmd_mcmc)

    s = sub.add_parser("compare", parents=[common], help="approximated versus MCMC estimates")
    s.add_argument("--min-common", type=int, default=7)
    s.add_argument("--iters", type=int, default=20000)
    s.add_argument("--burnin", type=int, default=5000)
    s.add_argument("--models", type=int, default=None,
                   help="evaluate a seeded random subset of this many models")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("simulate", parents=[common], help="closed form versus Monte Carlo")
    s.add_argument("--config", help="JSON simulation suite")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"twoset: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EnumerationError as exc:
        print(f"twoset: enumeration limit: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (FileNotFoundError, PermissionError, IsADirectoryError, DataError) as exc:
        print(f"twoset: input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"twoset: input/output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RankDeficientError, np.linalg.LinAlgError, QuadratureError, SamplerError,
            FloatingPointError) as exc:
        print(f"twoset: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"twoset: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
