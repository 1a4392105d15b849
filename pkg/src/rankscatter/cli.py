"""Command-line interface: ``rankscatter {test,are,simulate,calibrate}``."""
import argparse
import csv
import json
import sys

import numpy as np

from . import efficiency
from .elliptical import EllipticalFamily
from .estimators import GroupedSample, align
from .exceptions import ConfigError, InvalidParameter, ParseError, RankScatterError
from .homogeneity import box_m_test, pseudo_gaussian_test, rank_test
from .scores import ScoreFunction
from .simulation import (SimulationPlan, bundled_plans, calibrate_critical_values,
                         default_jobs, run_plan)

SCHEMA_VERSION = 1
_GAUSSIAN = ("pseudo-gaussian", "gaussian", "mlrt", "lrt")


def read_groups(path, group_column=None):
    """Read a delimited file with one label column and ``k`` numeric columns.

    Groups keep the order in which labels first appear.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        sample = fh.read(4096)
        fh.seek(0)
        try:
            dialect = csv.Sniffer().sniff(sample, delimiters=",;\t ")
        except csv.Error:
            dialect = csv.excel
        reader = csv.reader(fh, dialect)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty input file", row=1) from None
        if group_column is None:
            col = header.index("group") if "group" in header else 0
        elif group_column in header:
            col = header.index(group_column)
        else:
            raise ParseError(f"no column named {group_column!r}", row=1)
        features = [h for i, h in enumerate(header) if i != col]
        if not features:
            raise ParseError("no feature columns", row=1)
        groups = {}
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"line {line}: expected {len(header)} fields, got {len(row)}",
                                 row=line)
            label = row[col].strip()
            try:
                values = [float(c) for i, c in enumerate(row) if i != col]
            except ValueError:
                raise ParseError(f"line {line}: non-numeric feature value", row=line) from None
            if not np.all(np.isfinite(values)):
                raise ParseError(f"line {line}: missing or non-finite value", row=line)
            groups.setdefault(label, []).append(values)
    if len(groups) < 2:
        raise ParseError("need at least two distinct group labels")
    return list(groups), features, [np.array(v) for v in groups.values()]


def _split(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _parse_critval(text):
    if text in ("asymptotic", "calibrated"):
        return text
    out = {}
    for item in _split(text):
        label, sep, value = item.partition("=")
        if not sep:
            raise InvalidParameter(f"--critval expects 'asymptotic', 'calibrated' or "
                                   f"LABEL=VALUE pairs, got {item!r}")
        out[label.strip()] = float(value)
    return out


def cmd_test(args):
    labels, features, groups = read_groups(args.input, args.group_column)
    sample = GroupedSample(groups, labels)
    k = sample.k
    names = _split(args.tests)
    scores = [ScoreFunction.parse(t, k) for t in names if t.lower() not in _GAUSSIAN]
    critval = _parse_critval(args.critval)
    if critval == "calibrated" and scores:
        critval = calibrate_critical_values(scores, k, sample.sizes, args.ncal, args.seed,
                                            args.alpha, known=True, jobs=args.jobs)
    elif not isinstance(critval, dict):
        critval = {}
    frame = align(sample) if scores else None
    reports = []
    for name in names:
        t = name.lower()
        if t == "pseudo-gaussian":
            reports.append(pseudo_gaussian_test(sample, args.alpha,
                                                kurtosis_scatter=args.kurtosis_scatter))
        elif t == "gaussian":
            reports.append(pseudo_gaussian_test(sample, args.alpha, kurtosis_override=0.0))
        elif t in ("mlrt", "lrt"):
            reports.append(box_m_test(sample, args.alpha, "box" if t == "mlrt" else "lrt"))
        else:
            score = ScoreFunction.parse(t, k)
            reports.append(rank_test(frame, score, args.alpha, critval.get(score.label)))
    payload = {"schema_version": SCHEMA_VERSION, "input": args.input, "groups": labels,
               "sizes": list(sample.sizes), "features": features,
               "reports": [r.to_dict() for r in reports]}
    if frame is not None:
        payload["frame"] = {"scale": float(frame.scale),
                            "shape": np.asarray(frame.shape).tolist(),
                            "locations": [np.asarray(t).tolist() for t in frame.locations]}
    if args.output == "json":
        print(json.dumps(payload, indent=2))
    else:
        print(_format_reports(payload))
    return 0


def _format_reports(payload):
    lines = [f"groups: {', '.join(map(str, payload['groups']))} "
             f"(n = {', '.join(map(str, payload['sizes']))})"]
    if "frame" in payload:
        lines.append(f"median radial distance: {payload['frame']['scale']:.6g}")
    lines.append(f"{'test':<18}{'statistic':>12}{'scale':>11}{'shape':>11}{'df':>4}"
                 f"{'p-value':>10}{'crit':>9}  decision")
    for r in payload["reports"]:
        def num(v, width, fmt):
            return f"{'-':>{width}}" if v is None else f"{v:>{width}{fmt}}"
        lines.append(f"{r['test']:<18}{r['statistic']:>12.4f}{num(r['scale_part'], 11, '.4f')}"
                     f"{num(r['shape_part'], 11, '.4f')}{r['df']:>4}{r['p_value']:>10.4f}"
                     f"{r['critical_value']:>9.4f}  {'reject' if r['reject'] else 'accept'}"
                     + ("" if r["critical_value_mode"] == "asymptotic" else " (calibrated)"))
    for r in payload["reports"]:
        if r["pairwise"] is not None and len(payload["groups"]) > 2:
            lines.append(f"pairwise statistics, {r['test']}:")
            for row in r["pairwise"]:
                lines.append("  " + " ".join(f"{v:10.4f}" for v in row))
    return "\n".join(lines)


def cmd_are(args):
    ks = [int(k) for k in _split(args.k)]
    dens_names = _split(args.densities)
    for k in ks:
        for d in dens_names:
            fam = EllipticalFamily.parse(d, k)
            if not fam.finite_fourth_moment:
                raise InvalidParameter(
                    f"density {d!r}: Student densities need nu > 4 for finite AREs "
                    "(the pseudo-Gaussian test is not valid otherwise)")
    rows = efficiency.table1(ks, dens_names, _split(args.scores))
    if args.format == "table":
        text = efficiency.format_table(rows) + "\n"
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            efficiency.write_csv(rows, fh)
    else:
        efficiency.write_csv(rows, sys.stdout)
    return 0


def cmd_simulate(args):
    if args.list:
        print("\n".join(bundled_plans()))
        return 0
    if not args.plan:
        raise ConfigError("a plan path or bundled plan name is required", key="plan")
    plan = SimulationPlan.load(args.plan)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.replications is not None:
        changes["replications"] = args.replications
    if changes:
        plan = plan.replace(**changes)
    table = run_plan(plan, jobs=args.jobs)
    if args.out:
        with open(args.out + ".csv", "w", newline="", encoding="utf-8") as fh:
            fh.write(table.to_csv())
        with open(args.out + ".txt", "w", encoding="utf-8") as fh:
            fh.write(table.format_text() + "\n")
    print(table.format_text())
    return 0


def cmd_calibrate(args):
    sizes = [int(n) for n in _split(args.sizes)] if args.sizes else [args.n1, args.n2]
    scores = [ScoreFunction.parse(s, args.k) for s in _split(args.score)]
    qs = calibrate_critical_values(scores, args.k, sizes, args.ncal, args.seed, args.alpha,
                                   known=args.mode == "known", jobs=args.jobs)
    for label, q in qs.items():
        print(f"{label}\t{q:.4f}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="rankscatter",
                                description="Rank-based tests for homogeneity of scatter.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="run homogeneity tests on a data file")
    t.add_argument("input", help="delimited file with a header, a group column and k features")
    t.add_argument("--tests", default="vdw",
                   help="comma list: vdw, wilcoxon, spearman, student:NU, power:A, "
                        "powerexp:ETA, pseudo-gaussian, gaussian, mlrt, lrt")
    t.add_argument("--group-column", default=None,
                   help="label column (default: 'group' if present, else the first column)")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--critval", default="asymptotic",
                   help="'asymptotic', 'calibrated' (simulate at the data's group sizes) "
                        "or LABEL=VALUE pairs such as vdW=7.2117")
    t.add_argument("--ncal", type=int, default=20_000, help="calibration replications")
    t.add_argument("--seed", type=int, default=7)
    t.add_argument("--jobs", type=int, default=None)
    t.add_argument("--kurtosis-scatter", choices=("group", "pooled"), default="group",
                   help="covariance for the distances in the pseudo-Gaussian kurtosis estimate")
    t.add_argument("--output", choices=("table", "json"), default="table")
    t.set_defaults(func=cmd_test)

    a = sub.add_parser("are", help="asymptotic relative efficiencies (CSV)")
    a.add_argument("--k", default=",".join(map(str, efficiency.TABLE1_DIMENSIONS)))
    a.add_argument("--scores", default=",".join(efficiency.TABLE1_SCORES))
    a.add_argument("--densities", default=",".join(efficiency.TABLE1_DENSITIES))
    a.add_argument("--format", choices=("csv", "table"), default="csv")
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_are)

    s = sub.add_parser("simulate", help="run a rejection-frequency simulation plan")
    s.add_argument("plan", nargs="?", help="JSON plan file or bundled plan name")
    s.add_argument("--list", action="store_true", help="list bundled plans")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--replications", type=int, default=None)
    s.add_argument("--jobs", type=int, default=None)
    s.add_argument("--out", default=None, help="output prefix for .csv and .txt tables")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="simulate null critical values of rank statistics")
    c.add_argument("--score", default="vdw", help="comma list of scores")
    c.add_argument("--k", type=int, default=2)
    c.add_argument("--n1", type=int, default=100)
    c.add_argument("--n2", type=int, default=100)
    c.add_argument("--sizes", default=None, help="comma list of group sizes (overrides n1/n2)")
    c.add_argument("--ncal", type=int, default=100_000)
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--seed", type=int, default=7)
    c.add_argument("--mode", choices=("known", "estimated"), default="known",
                   help="rank at the true parameters or after estimation")
    c.add_argument("--jobs", type=int, default=None)
    c.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", None) is None and hasattr(args, "jobs"):
        args.jobs = default_jobs()
    try:
        return args.func(args)
    except ConfigError as exc:
        where = f" (key: {exc.key})" if exc.key else ""
        print(f"rankscatter: config error{where}: {exc}", file=sys.stderr)
    except ParseError as exc:
        print(f"rankscatter: parse error: {exc}", file=sys.stderr)
    except (RankScatterError, OSError) as exc:
        print(f"rankscatter: error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
