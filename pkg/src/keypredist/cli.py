"""Command-line interface.

Exit codes: 0 on success, 1 for configuration or domain errors, 2 for usage
errors (unknown subcommand, missing or malformed flags).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

from . import analytics, harness
from .analytics import DomainError
from .keyspace import ParameterError, Scheme, SchemeParams, assign, format_rings
from .network import deploy, discover, format_graph

OUTPUT_ENV = "KEYPREDIST_OUTPUT_DIR"

FORMULA_NAMES = harness.FORMULAS
PARAM_FREE_F = {"prop3-fopt", "prop5-fopt", "prop6-bound"}


def _scheme_arg(text: str) -> Scheme:
    try:
        return Scheme.parse(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown scheme {text!r}") from None


def _add_params(p: argparse.ArgumentParser, need_n: bool = True) -> None:
    p.add_argument("--scheme", type=_scheme_arg, default=Scheme.RANDOM, help="random, two-phase or 2pwr")
    p.add_argument("--N", type=int, required=need_n, help="network size")
    p.add_argument("--L", type=int, required=True, help="key pool size")
    p.add_argument("--k", type=int, required=True, help="keys per node")
    p.add_argument("--f", type=float, default=None, help="inheritance ratio")


def _params(args, default_n: int = 1000) -> SchemeParams:
    scheme = Scheme.parse(args.scheme)
    N = args.N if args.N is not None else default_n
    f = None if scheme is Scheme.RANDOM else args.f
    return SchemeParams(N, args.L, args.k, f, scheme)


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    if not os.path.isabs(out) and os.environ.get(OUTPUT_ENV):
        out = os.path.join(os.environ[OUTPUT_ENV], out)
    with open(out, "w", newline="") as fh:
        fh.write(text)


def _cmd_assign(args) -> int:
    params = _params(args)
    _emit(format_rings(assign(params, args.seed)), args.out)
    return 0


def _cmd_graph(args) -> int:
    params = _params(args)
    rings = assign(params, args.seed)
    dep = deploy(params, args.M, args.seed)
    g = discover(rings, dep, args.q, min_lid_gap=args.min_lid_gap)
    _emit(format_graph(g), args.out)
    return 0


def evaluate_formula(name: str, args) -> float:
    """Evaluate a registry formula from parsed CLI arguments."""
    scheme = Scheme.parse(args.scheme)
    f = args.f
    if name in PARAM_FREE_F or scheme is Scheme.RANDOM:
        # these depend on k, L and N only
        scheme, f = Scheme.RANDOM, None
    elif f is None:
        raise ParameterError(f"{name} with scheme {scheme.value} needs --f")
    N = args.N if args.N is not None else 1000
    params = SchemeParams(N, args.L, args.k, f, scheme)
    if name == "prop1":
        return analytics.expected_shared_keys(params, args.d)
    if name == "prop2-eq1":
        return analytics.exclusivity_random(params)
    if name == "prop2-eq2":
        return analytics.exclusivity_two_phase(params, adjacent=False)
    if name == "prop2-eq3":
        return analytics.exclusivity_two_phase(params, adjacent=True)
    if name == "prop3-eq4":
        return analytics.exclusivity_2pwr(params)
    if name == "prop3-fopt":
        return analytics.optimal_f_2pwr(params)
    if name == "prop4-eq9":
        return analytics.pcr_two_phase_bound(params, args.i, args.j, args.l)
    if name == "prop4-eq10":
        return analytics.pcr_random(params, approximate=args.approximate)
    if name == "prop5-fopt":
        return analytics.optimal_f_two_phase(params, args.t, args.y, args.side)
    if name == "prop6-bound":
        return analytics.comparative_f_upper_bound(params)
    if name == "prop7":
        return analytics.cluster_single_capture(params, M=args.M)
    if name == "prop8-vc":
        return analytics.vc_metric(params, None, args.i, args.j)
    if name == "lemma2":
        return analytics.e_z_expected(params, args.beta, args.i, args.j, args.l)
    if name == "eq14":
        return analytics.eligibility_value(args.holders)
    raise ParameterError(f"unknown formula {name!r}")


def _cmd_analytic(args) -> int:
    value = evaluate_formula(args.formula, args)
    print(harness.fmt_float(value))
    return 0


def _cmd_simulate(args) -> int:
    cfg = harness.load_config(args.config)
    report = harness.run(cfg, workers=args.workers)
    out = args.out or cfg.output
    if out is None:
        sys.stdout.write(report.to_json() if args.json else report.to_csv())
    else:
        _emit(report.to_csv() if not out.endswith(".json") else report.to_json(), out)
        if args.json and not out.endswith(".json"):
            _emit(report.to_json(), os.path.splitext(out)[0] + ".json")
    return 0


# family -> [(scheme, metrics)]
FAMILIES = {
    "prop1": [("random", ["prop1"]), ("two-phase", ["prop1"])],
    "prop2": [("random", ["prop2-eq1"]), ("two-phase", ["prop2-eq2", "prop2-eq3"])],
    "prop3": [("2pwr", ["prop3-eq4"])],
    "prop4": [("random", ["prop4-eq10"]), ("two-phase", ["prop4-eq9"])],
}


def _compare_positions(args, metric: str) -> dict:
    if metric == "prop1":
        return {"d": args.d_list, "i": args.i}
    if metric == "prop2-eq3":
        return {"i": args.i, "j": args.i + 1}
    if metric.startswith("prop4"):
        return {"i": args.i, "j": args.j, "l": args.l_list}
    return {"i": args.i, "j": args.j}


def _cmd_compare(args) -> int:
    rows = []
    for scheme, metrics in FAMILIES[args.family]:
        for metric in metrics:
            obj = {
                "params": {
                    "N": args.N,
                    "L": args.L,
                    "k": args.k,
                    "f": None if scheme == "random" else args.f,
                    "scheme": scheme,
                },
                "trials": args.trials,
                "seed": args.seed,
                "metrics": [metric],
                "positions": _compare_positions(args, metric),
            }
            rows.extend(harness.run(harness.parse_config(obj)).rows)
    sys.stdout.write(harness.MetricsReport(rows).to_csv())
    return 0


def _cmd_validate(args) -> int:
    from .validation import run_checks

    results = run_checks(scale=args.scale, seed=args.seed)
    failed = 0
    for res in results:
        print(res.line())
        failed += res.status == "FAIL"
    print(f"{len(results)} checks, {failed} failed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="keypredist", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("assign", help="dump key rings as lid,key0,key1,...")
    _add_params(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_assign)

    p = sub.add_parser("graph", help="dump the q-composite logical graph")
    _add_params(p)
    p.add_argument("--M", type=int, required=True, help="nodes per cluster")
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--min-lid-gap", type=int, default=0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_graph)

    p = sub.add_parser("analytic", help="evaluate one closed-form metric")
    p.add_argument("--formula", required=True, choices=FORMULA_NAMES)
    _add_params(p, need_n=False)
    p.add_argument("--d", type=int, default=1, help="LID distance (prop1)")
    p.add_argument("--i", type=int, default=2)
    p.add_argument("--j", type=int, default=3)
    p.add_argument("--l", type=int, default=1)
    p.add_argument("--t", type=int, default=1)
    p.add_argument("--y", type=int, default=5)
    p.add_argument("--side", default="worst", choices=["outside", "inside", "worst"])
    p.add_argument("--beta", type=int, default=0)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--holders", type=int, default=0)
    p.add_argument("--approximate", action="store_true", help="reduced form of prop4-eq10")
    p.set_defaults(func=_cmd_analytic)

    p = sub.add_parser("simulate", help="run an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--json", action="store_true", help="also write / print the JSON mirror")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("compare", help="analytic vs Monte Carlo table for a formula family")
    p.add_argument("--family", required=True, choices=sorted(FAMILIES))
    _add_params(p)
    p.add_argument("--i", type=int, default=10)
    p.add_argument("--j", type=int, default=20)
    p.add_argument("--d-list", type=int, nargs="+", default=[1, 2, 5])
    p.add_argument("--l-list", type=int, nargs="+", default=[1, 21, 30])
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("validate", help="run the oracle suite at reduced scale")
    p.add_argument("--scale", type=float, default=0.1, help="multiplier on full-scale trial counts")
    p.add_argument("--seed", type=int, default=2024)
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    try:
        return args.func(args)
    except (harness.ConfigError, ParameterError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

