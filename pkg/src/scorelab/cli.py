"""Command-line interface: ``scorelab <subcommand> ...``.

Exit codes: 0 success, 2 usage or specification error, 3 numerical failure.
Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from . import __version__
from .analysis import divergence, euler_residual, fisher_divergence, kl_divergence, propriety_scan, standard_family
from .construction import concavity_report, construct_score, get_kernel, recover_kernel
from .densities import class_p_diagnostics
from .errors import NumericalError, SpecificationError
from .grammar import format_density, parse_density
from .harness import (
    EvalConfig,
    SynthConfig,
    default_bma_truth,
    default_emos_truth,
    load_cases,
    params_from_dict,
    rolling_evaluate,
    synth_generate,
    write_cases,
)
from .scores import LocalScore, get_score

log = logging.getLogger("scorelab")

HELP_WIDTH = 100
SUBCOMMANDS = ("score", "construct", "recover", "check", "diverge", "euler", "synth", "evaluate")


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=HELP_WIDTH, max_help_position=34)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text):
    parts = text.split(":")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"expected lo:hi:n, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("grid needs n >= 1")
    return np.linspace(lo, hi, n)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("table", "json"), default="table", help="output format (default: table)")

    parser = argparse.ArgumentParser(
        prog="scorelab",
        description="Local proper scoring rules and forecast evaluation.",
        formatter_class=_formatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="<command>", required=True)

    def add(name, help_text):
        return sub.add_parser(name, help=help_text, description=help_text, parents=[common], formatter_class=_formatter)

    p = add("score", "evaluate a scoring rule at observations x under a predictive density")
    p.add_argument("--rule", required=True, help="ls, hs, lcs, qs, sphs or power:n:c")
    p.add_argument("--density", required=True, help="density string, e.g. normal:0:1")
    p.add_argument("--x", required=True, type=_floats, help="observation(s), comma-separated")

    p = add("construct", "build the local score induced by a kernel and check concavity on a grid")
    p.add_argument("--kernel", required=True, help="power:n:c, logcosh or log[:c]")
    p.add_argument("--at", action="append", type=_floats, default=[], metavar="X,Y0,Y1,Y2", help="evaluate the score here (repeatable)")
    p.add_argument("--x-grid", type=_grid, default="-5:5:51", metavar="LO:HI:N", help="x grid for the concavity check (default: -5:5:51)")
    p.add_argument("--y1-grid", type=_grid, default="-5:5:51", metavar="LO:HI:N", help="y1 grid for the concavity check (default: -5:5:51)")

    p = add("recover", "recover the kernel of a local proper score")
    p.add_argument("--rule", required=True, help="hs, lcs, ls or power:n:c")
    p.add_argument("--z2", type=float, default=0.0, help="z2 probe (default: 0)")
    p.add_argument("--z3", type=float, default=0.0, help="z3 probe (default: 0)")
    p.add_argument("--at", action="append", type=_floats, default=[], metavar="X,Y1", help="evaluate K0 here (repeatable)")

    p = add("check", "scan propriety of a score over a density family")
    p.add_argument("--rule", required=True, help="ls, hs, lcs, qs, sphs or power:n:c")
    p.add_argument("--family", default="standard", help="'standard' or a ';'-separated list of density strings")
    p.add_argument("--strictness-tol", type=float, default=1e-6, help="margins at or below this count as ties (default: 1e-6)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default: 1)")
    p.add_argument("--class-p", action="store_true", help="also run the tail heuristics for every family member")

    p = add("diverge", "divergence between densities p and q")
    p.add_argument("--rule", required=True, help="a score identifier, or kl / fisher for direct quadrature")
    p.add_argument("--p", required=True, help="true density string")
    p.add_argument("--q", required=True, help="forecast density string")

    p = add("euler", "Euler-equation residual of a local score along a grid")
    p.add_argument("--rule", required=True, help="ls, hs, lcs or power:n:c")
    p.add_argument("--density", required=True, help="density string")
    p.add_argument("--grid", type=_grid, default=None, metavar="LO:HI:N", help="x grid (default: mean +- 4 sd, 81 points)")
    p.add_argument("--step", type=float, default=2e-3, help="finite-difference step (default: 2e-3)")

    p = add("synth", "generate a synthetic ensemble forecast data set")
    p.add_argument("--days", type=int, required=True, help="number of valid dates")
    p.add_argument("--stations", type=int, required=True, help="number of stations")
    p.add_argument("--k", type=int, default=5, help="ensemble size (default: 5)")
    p.add_argument("--truth", choices=("bma", "emos"), default="bma", help="form of the true predictive density (default: bma)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--output", required=True, help="CSV file to write")
    p.add_argument("--params-out", default=None, help="write the truth parameters to this JSON file")

    p = add("evaluate", "rolling-window evaluation of postprocessed ensemble forecasts")
    p.add_argument("--input", required=True, help="CSV with case_id,valid_time,station,obs,f1..fk")
    p.add_argument("--train-bma", type=int, default=25, help="BMA window in distinct dates (default: 25)")
    p.add_argument("--train-emos", type=int, default=40, help="EMOS window in distinct dates (default: 40)")
    p.add_argument("--scores", default="ls,hs,lcs,qs,sphs", help="comma-separated score identifiers")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default: 1)")
    p.add_argument("--truth-params", default=None, help="JSON truth parameters; adds a Truth row")
    p.add_argument("--skip-log", default=None, help="write skipped cases to this CSV file")
    p.add_argument("--records", action="store_true", help="include per-case scores in JSON output")
    return parser


def help_text() -> str:
    """Top-level help followed by every subcommand's help."""
    parser = build_parser()
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    chunks = [parser.format_help()]
    for name in SUBCOMMANDS:
        chunks.append(sub.choices[name].format_help())
    return "\n".join(chunks)


# -- output -----------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _emit(args, payload, table):
    if args.format == "json":
        print(json.dumps(payload, indent=2))
    else:
        print(table)


def _kv_table(pairs):
    width = max(len(k) for k, _ in pairs)
    return "\n".join(f"{k.ljust(width)}  {_fmt(v)}" for k, v in pairs)


# -- commands ---------------------------------------------------------------------


def cmd_score(args):
    s = get_score(args.rule)
    q = parse_density(args.density)
    values = [float(s.score(x, q)) for x in args.x]
    payload = {"rule": s.label, "density": format_density(q), "x": args.x, "values": values}
    _emit(args, payload, _kv_table([(f"x={_fmt(x)}", v) for x, v in zip(args.x, values)]))


def cmd_construct(args):
    K = get_kernel(args.kernel)
    s = construct_score(K)
    report = concavity_report(K, args.x_grid, args.y1_grid)
    points = []
    for pt in args.at:
        if len(pt) != 4:
            raise SpecificationError("--at needs x,y0,y1,y2")
        points.append({"x": pt[0], "y0": pt[1], "y1": pt[2], "y2": pt[3], "score": float(s(*pt))})
    payload = {"kernel": K.label, "score": s.label, "c": K.c, "concavity": report.to_dict(), "points": points}
    rows = [("kernel", K.label), ("c", K.c), ("verdict", report.verdict), ("min_d11", report.min_d11), ("max_d11", report.max_d11)]
    rows += [(f"s({_fmt(p['x'])},{_fmt(p['y0'])},{_fmt(p['y1'])},{_fmt(p['y2'])})", p["score"]) for p in points]
    _emit(args, payload, _kv_table(rows))


def cmd_recover(args):
    s = get_score(args.rule)
    if not isinstance(s, LocalScore):
        raise SpecificationError(f"{s.label} is not a local score")
    K = recover_kernel(s, args.z2, args.z3)
    points = []
    for pt in args.at:
        if len(pt) != 2:
            raise SpecificationError("--at needs x,y1")
        points.append({"x": pt[0], "y1": pt[1], "K0": float(K.K0(pt[0], pt[1]))})
    payload = {"rule": s.label, "c": K.c, "diagnostics": K.diagnostics, "points": points}
    rows = [("rule", s.label), ("c", K.c)] + [(f"residual_{k}", v) for k, v in K.diagnostics["residuals"].items()]
    rows += [(f"K0({_fmt(p['x'])},{_fmt(p['y1'])})", p["K0"]) for p in points]
    _emit(args, payload, _kv_table(rows))


def _family(text):
    if text.strip().lower() == "standard":
        return standard_family()
    return [parse_density(t) for t in text.split(";") if t.strip()]


def cmd_check(args):
    s = get_score(args.rule)
    fam = _family(args.family)
    report = propriety_scan(s, fam, strictness_tol=args.strictness_tol, threads=args.threads)
    payload = report.to_dict()
    if args.class_p:
        payload["class_p"] = {format_density(p): class_p_diagnostics(p).to_dict() for p in fam}
    lines = [
        f"score           {report.score}",
        f"densities       {len(fam)}",
        f"min_margin      {_fmt(report.min_margin)}",
        f"min_distinct    {_fmt(report.min_distinct_margin)}",
        f"proper          {report.proper}",
        f"strictly_proper {report.strictly_proper}",
    ]
    for v in report.strict_violations:
        lines.append(f"  tie or violation: p={v['p']} q={v['q']} margin={_fmt(v['margin'])}")
    if args.class_p:
        for p in fam:
            r = payload["class_p"][format_density(p)]
            lines.append(f"  class-P heuristics {format_density(p)}: {'pass' if r['passed'] else 'fail: ' + ', '.join(r['failures'])}")
    _emit(args, payload, "\n".join(lines))


def cmd_diverge(args):
    p, q = parse_density(args.p), parse_density(args.q)
    rule = args.rule.strip().lower()
    if rule == "kl":
        value, label = kl_divergence(p, q), "kl"
    elif rule == "fisher":
        value, label = fisher_divergence(p, q), "fisher"
    else:
        s = get_score(rule)
        value, label = divergence(s, p, q), s.label
    payload = {"rule": label, "p": format_density(p), "q": format_density(q), "divergence": value}
    _emit(args, payload, _fmt(value))


def cmd_euler(args):
    s = get_score(args.rule)
    if not isinstance(s, LocalScore):
        raise SpecificationError(f"{s.label} is not a local score")
    p = parse_density(args.density)
    r = euler_residual(s, p, args.grid, h=args.step)
    payload = {"rule": s.label, "density": format_density(p), **r.to_dict()}
    rows = [("rule", s.label), ("c_p_estimate", r.c_p_estimate), ("max_abs_deviation", r.max_abs_deviation), ("step", r.step)]
    _emit(args, payload, _kv_table(rows))


def cmd_synth(args):
    truth = default_bma_truth(args.k) if args.truth == "bma" else default_emos_truth(args.k)
    cases = synth_generate(SynthConfig(args.days, args.stations, args.k, truth, args.seed))
    write_cases(args.output, cases)
    if args.params_out:
        with open(args.params_out, "w", encoding="utf-8") as fh:
            json.dump(truth.to_dict(), fh, indent=2)
    payload = {"output": args.output, "n_cases": len(cases), "truth": truth.to_dict(), "seed": args.seed}
    _emit(args, payload, _kv_table([("output", args.output), ("n_cases", len(cases)), ("truth", args.truth), ("seed", args.seed)]))


def cmd_evaluate(args):
    cases = load_cases(args.input)
    scores = tuple(s.strip() for s in args.scores.split(",") if s.strip())
    config = EvalConfig(args.train_bma, args.train_emos, scores, args.threads)
    truth = None
    if args.truth_params:
        with open(args.truth_params, encoding="utf-8") as fh:
            truth = params_from_dict(json.load(fh))
    report = rolling_evaluate(cases, config, truth)
    if args.skip_log:
        report.write_skip_log(args.skip_log)
    _emit(args, report.to_dict(include_records=args.records), report.format_table())


COMMANDS = {name: globals()[f"cmd_{name}"] for name in SUBCOMMANDS}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except SpecificationError as exc:
        print(f"scorelab: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"scorelab: numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"scorelab: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
