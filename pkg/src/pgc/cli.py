"""Command line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

Every training flag can also be set through an environment variable named
``PGC_<FLAG>`` (upper case, dashes as underscores, e.g. ``PGC_WEIGHT_DECAY``);
an explicit flag wins over the environment.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import circuit as pgc
from . import pc as pmc
from .data import ParseError, load_baskets, load_benchmark, load_split, split
from .errors import ContractError, NumericalError, RefusalError
from .learn import (TrainConfig, grid_search, load_checkpoint, log_likelihoods,
                    model_log_likelihood, save_checkpoint, train)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
REPORT_SCHEMA = "pgc-report/1"
ENV_PREFIX = "PGC_"


class UsageError(Exception):
    pass


def parse_query(text: str, n: int) -> pgc.MarginalQuery:
    """``"X1=1,X3=0"`` -> query; unlisted variables are free."""
    ones, zeros = set(), set()
    for part in filter(None, (p.strip() for p in text.split(","))):
        try:
            name, val = part.split("=")
            name = name.strip()
            if not name.upper().startswith("X"):
                raise ValueError
            i = int(name[1:]) - 1
            v = int(val)
        except ValueError:
            raise UsageError(f"cannot parse query term {part!r}; expected Xi=0 or Xi=1") from None
        if not 0 <= i < n:
            raise UsageError(f"unknown variable {name}: circuit has X1..X{n}")
        if v not in (0, 1):
            raise UsageError(f"{name} must be 0 or 1")
        if (v == 1 and i in zeros) or (v == 0 and i in ones):
            raise UsageError(f"conflicting values for {name}")
        (ones if v else zeros).add(i)
    return pgc.MarginalQuery(ones, zeros)


def _load_circuit(path):
    try:
        c = pgc.load(path)
    except (OSError, pgc.FormatError) as e:
        raise DataError(str(e)) from e
    bad = pgc.validate_syntax(c)
    if bad:
        raise DataError(f"{path}: invalid circuit: " + "; ".join(bad))
    return c


class DataError(Exception):
    pass


def cmd_marginal(args):
    c = _load_circuit(args.circuit)
    q = parse_query(args.query, c.nvars)
    print(f"{pgc.marginal(c, q):.12g}")
    return EXIT_OK


def cmd_convert(args):
    try:
        m = pmc.load(args.pc)
    except (OSError, pgc.FormatError, ContractError) as e:
        raise DataError(str(e)) from e
    dec = pmc.check_decomposable(m)
    if not dec.ok:
        print(f"error: circuit is not decomposable; offending nodes {dec.offending}", file=sys.stderr)
        return EXIT_DATA
    text = pgc.dumps(pmc.to_pgc(m))
    if args.output:
        with open(args.output, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle_check(args):
    c = _load_circuit(args.circuit)
    if c.nvars > args.limit:
        print(f"refused: n = {c.nvars} exceeds enumeration limit {args.limit}", file=sys.stderr)
        return EXIT_USAGE
    rep = pgc.validate_semantics(c, args.limit)
    status = "pass" if rep.ok else "fail"
    print(f"{status} nonnegative={rep.nonnegative} normalized={rep.normalized} "
          f"total={rep.total:.12g} max_violation={rep.max_violation:.3g}")
    return EXIT_OK if rep.ok else EXIT_NUMERIC


def _load_dataset(args):
    src = args.source
    try:
        if os.path.isdir(src):
            name = args.name or os.path.basename(os.path.normpath(src))
            return load_benchmark(src, name)
        if args.items is None:
            raise UsageError("basket files need --items")
        rows = load_baskets(src, args.items)
        return split(rows, args.split_seed, name=os.path.basename(src))
    except (OSError, ParseError, RefusalError, ValueError) as e:
        if isinstance(e, UsageError):
            raise
        raise DataError(str(e)) from e


def _config(args) -> TrainConfig:
    return TrainConfig(K=args.K, C=args.C, lr=args.lr, epochs=args.epochs,
                       batch_size=args.batch, weight_decay=args.weight_decay, seed=args.seed,
                       K_grid=tuple(args.K_grid), C_grid=tuple(args.C_grid))


def _nparams(model):
    return int(model.factors.size + model.theta.size + model.logits.size)


def cmd_train(args):
    data = _load_dataset(args)
    cfg = _config(args)
    start = time.perf_counter()
    report = {"schema": REPORT_SCHEMA, "command": "train", "argv": _echo(args),
              "seed": cfg.seed, "dataset": data.name, "n": data.n}
    if args.grid:
        res = grid_search(data, cfg.K_grid, cfg.C_grid, cfg)
        best, cfg_used = res.best, res.best_config
        report["grid"] = [{"K": K, "C": C, "valid_nll": v, "error": res.errors.get((K, C))}
                          for (K, C), v in res.table.items()]
        test_ll = -res.test_nll
    else:
        best, cfg_used = train(data, cfg), cfg
        test_ll = float(log_likelihoods(best.model, data.test).mean())
    seconds = time.perf_counter() - start
    report["config"] = asdict(cfg_used)
    report["metrics"] = {
        "avg_test_ll": test_ll,
        "avg_valid_ll": -best.log[best.best_epoch]["valid_nll"],
        "avg_train_ll": -best.final_train_nll,
        "best_epoch": best.best_epoch,
        "model_params": _nparams(best.model),
        "groups": [list(g) for g in best.model.partition.groups],
    }
    report["log"] = best.log
    if args.record_time:
        report["metrics"]["train_seconds"] = seconds
    if args.checkpoint:
        save_checkpoint(best.model, args.checkpoint, extra={"config": asdict(cfg_used)})
    if args.report:
        with open(args.report, "w") as f:
            json.dump(report, f, indent=1, sort_keys=True)
            f.write("\n")
    print(f"dataset {data.name}: K={cfg_used.K} C={cfg_used.C} avg test log-likelihood "
          f"{test_ll:.4f} nats ({seconds:.1f}s)")
    return EXIT_OK


def cmd_eval(args):
    try:
        model = load_checkpoint(args.checkpoint)
    except (OSError, ValueError, KeyError, ContractError) as e:
        raise DataError(f"{args.checkpoint}: {e}") from e
    if os.path.isdir(args.source):
        name = args.name or os.path.basename(os.path.normpath(args.source))
        try:
            X = load_split(args.source, name, args.split)
        except RefusalError:
            raise UsageError(f"split {args.split!r} is empty") from None
        except (OSError, ParseError) as e:
            raise DataError(str(e)) from e
    else:
        X = _load_dataset(args).splits()[args.split]
    if len(X) == 0:
        raise UsageError(f"split {args.split!r} is empty")
    if X.shape[1] != model.n:
        raise UsageError(f"checkpoint has {model.n} variables, data has {X.shape[1]}")
    if args.method == "circuit":
        ll = np.array([model_log_likelihood(model, x, backend=args.backend) for x in X])
    else:
        ll = log_likelihoods(model, X)
    print(f"{ll.mean():.12g}")
    return EXIT_OK


def _echo(args):
    # output locations are left out so that reruns elsewhere stay byte-identical
    return {k: v for k, v in sorted(vars(args).items())
            if k not in ("func", "report", "checkpoint")}


def _env(name, cast, default):
    raw = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if raw is None:
        return default
    if cast is list:
        return [int(x) for x in raw.replace(",", " ").split()]
    if cast is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    return cast(raw)


def _add_training_flags(p):
    d = TrainConfig()
    p.add_argument("--K", type=int, default=_env("K", int, d.K))
    p.add_argument("--C", type=int, default=_env("C", int, d.C))
    p.add_argument("--lr", type=float, default=_env("lr", float, d.lr))
    p.add_argument("--epochs", type=int, default=_env("epochs", int, d.epochs))
    p.add_argument("--batch", type=int, default=_env("batch", int, d.batch_size))
    p.add_argument("--weight-decay", type=float, default=_env("weight-decay", float, d.weight_decay))
    p.add_argument("--seed", type=int, default=_env("seed", int, d.seed))
    p.add_argument("--grid", action="store_true", default=_env("grid", bool, False))
    p.add_argument("--K-grid", type=int, nargs="+", default=_env("K-grid", list, list(d.K_grid)))
    p.add_argument("--C-grid", type=int, nargs="+", default=_env("C-grid", list, list(d.C_grid)))


def _add_data_flags(p):
    p.add_argument("source", help="benchmark directory (<name>.{train,valid,test}.data) or basket file")
    p.add_argument("--name", help="dataset name inside the benchmark directory")
    p.add_argument("--items", type=int, help="number of items for basket files")
    p.add_argument("--split-seed", type=int, default=_env("split-seed", int, 0))


def build_parser():
    ap = argparse.ArgumentParser(prog="pgc", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=_env("threads", int, 1),
                    help="upper bound on BLAS threads (default 1)")
    ap.add_argument("--backend", choices=("bird", "evalinterp"),
                    default=_env("backend", str, "evalinterp"))
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("marginal", help="marginal probability of a query")
    p.add_argument("circuit")
    p.add_argument("query", nargs="?", default="")
    p.set_defaults(func=cmd_marginal)

    p = sub.add_parser("convert", help="probabilistic mass circuit -> generating circuit")
    p.add_argument("pc")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="fit a SimplePGC")
    _add_data_flags(p)
    _add_training_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--report")
    p.add_argument("--record-time", action="store_true",
                   help="include wall-clock time in the report (makes it non-reproducible)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="average log-likelihood of a split")
    p.add_argument("checkpoint")
    _add_data_flags(p)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--method", choices=("closed", "circuit"), default="closed")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle-check", help="validate semantics by enumeration")
    p.add_argument("circuit")
    p.add_argument("--limit", type=int, default=pgc.DEFAULT_LIMIT)
    p.set_defaults(func=cmd_oracle_check)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    from threadpoolctl import threadpool_limits
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except (UsageError, ContractError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, RefusalError, ParseError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
