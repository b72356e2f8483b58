"""Command line interface.

Exit codes:

* 0: success (for ``ci``, at least one requested method produced a result)
* 2: bad input: unreadable or malformed data, invalid config, bad arguments
* 3: numerical failure: no requested method produced a result

Data goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .data import ThreeWayArray, read_csv
from .errors import (BracketFailure, CorrectionNotPD, DataFormatError, ELConvergenceError,
                     EstimatorError, MultiwayELError, SingularVariance)
from .estimators import make_estimator
from .mel import MultiwayEL, chi2_threshold
from .threeway import ThreeWayMEL
from .variance import eww_variance, iid_variance, wald_interval
from .simulation.experiment import ConfigError, ExperimentConfig, run_experiment
from .simulation.report import format_table, read_report_csv, reports_to_csv

EXIT_OK, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3
SEED_ENV = "MULTIWAY_EL_SEED"
CI_METHODS = ("mel", "mmel", "mmel-noc", "mmw", "eww", "iid")
_LIKELIHOOD = ("mel", "mmel", "mmel-noc")
CI_FIELDS = ("method", "status", "estimate", "lo", "hi", "level", "statistic",
             "possibly_non_interval", "clipped", "message")


def _err(msg: str) -> None:
    print(f"multiway-el: {msg}", file=sys.stderr)


def _parse_setting(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ValueError(f"estimator option {text!r} is not key=value")
    return key.strip(), yaml.safe_load(value)


def _ci_record(method, level, estimate, index=0, **kw):
    rec = dict.fromkeys(CI_FIELDS)
    rec.update(method=method, level=level, estimate=float(estimate[index]),
               status="ok", possibly_non_interval=False, clipped=False)
    rec.update(kw)
    return rec


def _run_method(method, array, mel, level, clip, theta):
    """Records (one per coordinate for Wald methods) for a single method."""
    three = isinstance(array, ThreeWayArray)
    est = mel.theta_hat
    d = len(est)
    if three and method in ("mmel-noc", "eww", "iid"):
        raise ValueError(f"method {method} is only defined for two-way data")
    if method in _LIKELIHOOD:
        if d == 1:
            cs = mel.confidence_set(level, method, clip)
            stat = None if theta is None else mel.statistic(method, theta, clip)
            return [_ci_record(method, level, est, lo=cs.lo, hi=cs.hi, statistic=stat,
                               possibly_non_interval=cs.possibly_non_interval, clipped=clip)]
        if theta is None:
            raise ValueError(f"{method} with a {d}-dimensional parameter needs --theta")
        stat = mel.statistic(method, theta, clip)
        return [_ci_record(method, level, est, statistic=stat, clipped=clip,
                           message="contains theta" if stat <= chi2_threshold(level, d)
                           else "excludes theta")]
    if method == "mmw":
        var = mel.mmw_matrix(clip) / mel.n
    elif method == "eww":
        var = eww_variance(array, est).matrix
    else:
        var = iid_variance(array, est).matrix
    out = []
    for k in range(d):
        lo, hi = wald_interval(est, var, level, k)
        out.append(_ci_record(method if d == 1 else f"{method}[{k}]", level, est, k,
                              lo=lo, hi=hi, clipped=clip and method == "mmw"))
    return out


def _failure_record(method, level, status, exc):
    rec = dict.fromkeys(CI_FIELDS)
    rec.update(method=method, level=level, status=status, message=str(exc))
    return rec


def _emit_ci(records, fmt, out):
    if fmt == "json-lines":
        for r in records:
            out.write(json.dumps(r) + "\n")
    elif fmt == "csv":
        out.write(",".join(CI_FIELDS) + "\n")
        for r in records:
            vals = []
            for k in CI_FIELDS:
                v = r[k]
                if v is None:
                    vals.append("")
                elif isinstance(v, bool):
                    vals.append("1" if v else "0")
                elif isinstance(v, float):
                    vals.append("%.17g" % v)
                else:
                    vals.append(str(v).replace(",", ";"))
            out.write(",".join(vals) + "\n")
    else:
        for r in records:
            if r["status"] != "ok":
                out.write(f"{r['method']:>9}: {r['status']} ({r['message']})\n")
                continue
            line = f"{r['method']:>9}: estimate {r['estimate']:.6g}"
            if r["lo"] is not None:
                line += f"  {r['level']:.0%} interval [{r['lo']:.6g}, {r['hi']:.6g}]"
            if r["statistic"] is not None:
                line += f"  statistic {r['statistic']:.6g}"
            flags = [f for f in ("possibly_non_interval", "clipped") if r[f]]
            if flags:
                line += "  [" + ", ".join(flags) + "]"
            if r["message"]:
                line += f"  {r['message']}"
            out.write(line + "\n")


def cmd_ci(args) -> int:
    if not 0 < args.level < 1:
        _err("--level must lie in (0, 1)")
        return EXIT_DATA
    try:
        array = read_csv(args.data)
    except FileNotFoundError:
        _err(f"{args.data}: no such file")
        return EXIT_DATA
    except DataFormatError as exc:
        _err(f"{args.data}: {exc}")
        return EXIT_DATA
    try:
        settings = dict(_parse_setting(s) for s in args.option)
        estimator = make_estimator(args.estimator, **settings)
    except (TypeError, ValueError) as exc:
        _err(f"estimator: {exc}")
        return EXIT_DATA
    theta = None if args.theta is None else np.array(args.theta, dtype=float)

    if isinstance(array, ThreeWayArray):
        if args.estimator.lower() != "mean" or settings:
            _err("three-way data supports only the mean estimator")
            return EXIT_DATA
        mel = ThreeWayMEL(array)
    else:
        mel = MultiwayEL(estimator, array)
        try:
            mel.theta_hat
        except EstimatorError as exc:
            _err(f"estimation failed: {exc}")
            return EXIT_NUMERIC
        except (IndexError, ValueError) as exc:
            _err(f"estimator does not fit the data: {exc}")
            return EXIT_DATA
    if theta is not None and len(theta) != len(mel.theta_hat):
        _err(f"--theta has {len(theta)} entries but the parameter has {len(mel.theta_hat)}")
        return EXIT_DATA

    records = []
    for method in args.method:
        try:
            records.extend(_run_method(method, array, mel, args.level,
                                       args.clip_correction, theta))
        except CorrectionNotPD as exc:
            records.append(_failure_record(method, args.level, "not_pd", exc))
        except (ELConvergenceError, EstimatorError) as exc:
            records.append(_failure_record(method, args.level, "nonconvergence", exc))
        except (SingularVariance, BracketFailure) as exc:
            records.append(_failure_record(method, args.level, "numerical", exc))
        except ValueError as exc:
            records.append(_failure_record(method, args.level, "unsupported", exc))
    for r in records:
        if r["status"] != "ok":
            _err(f"{r['method']}: {r['status']}: {r['message']}")
    _emit_ci(records, args.format, sys.stdout)
    return EXIT_OK if any(r["status"] == "ok" for r in records) else EXIT_NUMERIC


def _load_config(args) -> ExperimentConfig:
    with open(args.config) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping of keys to values")
    if args.replications is not None:
        raw["replications"] = args.replications
    seed = os.environ.get(SEED_ENV)
    if args.seed is not None:
        raw["seed"] = args.seed
    elif seed is not None:
        try:
            raw["seed"] = int(seed)
        except ValueError:
            raise ConfigError("seed", f"{SEED_ENV}={seed!r} is not an integer") from None
    if args.workers is not None:
        raw["workers"] = args.workers
    return ExperimentConfig.from_dict(raw)


def cmd_simulate(args) -> int:
    try:
        config = _load_config(args)
    except FileNotFoundError:
        _err(f"{args.config}: no such file")
        return EXIT_DATA
    except yaml.YAMLError as exc:
        _err(f"{args.config}: {exc}")
        return EXIT_DATA
    except ConfigError as exc:
        _err(f"invalid config key {exc.key!r}: {exc}")
        return EXIT_DATA
    except MultiwayELError as exc:
        _err(f"invalid config: {exc}")
        return EXIT_DATA
    try:
        cells = list(config.cells())
    except (MultiwayELError, ValueError) as exc:
        _err(f"invalid config: {exc}")
        return EXIT_DATA
    _err(f"running {len(cells)} cells x {config.replications} replications "
         f"(seed {config.seed})")
    reports = run_experiment(config)
    csv_text = reports_to_csv(reports)
    table = format_table(read_report_csv(csv_text), config.title)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{config.output}.csv").write_text(csv_text)
    (out / f"{config.output}.txt").write_text(table)
    for rep in reports:
        for m in rep.methods:
            if rep.flagged(m):
                _err(f"flagged: {rep.dgp} M={rep.M} {rep.param_name}={rep.param:g} {m}: "
                     f"{rep.failure_count(m)} failures")
    sys.stdout.write(table)
    return EXIT_OK


def cmd_table(args) -> int:
    try:
        text = Path(args.input).read_text()
        rows = read_report_csv(text)
    except FileNotFoundError:
        _err(f"{args.input}: no such file")
        return EXIT_DATA
    except (KeyError, ValueError) as exc:
        _err(f"{args.input}: {exc}")
        return EXIT_DATA
    sys.stdout.write(format_table(rows, args.title))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multiway-el",
                                description="Multiway empirical likelihood inference.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    ci = sub.add_parser("ci", help="confidence sets for a data file")
    ci.add_argument("--data", required=True, help="CSV with columns i,j[,t],v1..vd")
    ci.add_argument("--estimator", default="mean",
                    help="mean, ht, logit or gee (default mean)")
    ci.add_argument("--option", action="append", default=[], metavar="KEY=VALUE",
                    help="estimator setting, e.g. z_indices=[1,2]; repeatable")
    ci.add_argument("--method", action="append", choices=CI_METHODS,
                    help="repeatable; default mmel")
    ci.add_argument("--level", type=float, default=0.95)
    ci.add_argument("--clip-correction", action="store_true",
                    help="floor eigenvalues of the corrected variance instead of failing")
    ci.add_argument("--theta", type=float, nargs="+",
                    help="also report statistics at this parameter value")
    ci.add_argument("--format", choices=("text", "csv", "json-lines"), default="text")
    ci.set_defaults(func=cmd_ci)

    sim = sub.add_parser("simulate", help="run a Monte Carlo coverage experiment")
    sim.add_argument("--config", required=True, help="YAML experiment config")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--replications", type=int)
    sim.add_argument("--seed", type=int, help=f"overrides the config and {SEED_ENV}")
    sim.add_argument("--workers", type=int, help="default: available CPUs")
    sim.set_defaults(func=cmd_simulate)

    tab = sub.add_parser("table", help="render a coverage CSV as a text table")
    tab.add_argument("--in", dest="input", required=True)
    tab.add_argument("--style", choices=("paper",), default="paper")
    tab.add_argument("--title")
    tab.set_defaults(func=cmd_table)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_DATA if exc.code else EXIT_OK
    if args.command == "ci" and not args.method:
        args.method = ["mmel"]
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
