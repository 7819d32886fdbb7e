"""Command-line entry point.

Exit codes: 0 on success, 1 for malformed input, 2 when the candidate set or
a design is infeasible or singular.
"""

from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from . import __version__
from .analytic import (
    ThreePointProblem,
    solve_three_point,
    three_point_coefficients,
    uniform_minimal_verdict,
)
from .errors import (
    DesignSpaceError,
    InfeasibleDesignError,
    SingularDesignError,
    UnsupportedModelError,
)
from .fisher import RankReport, analyze_rank
from .io import (
    ParseError,
    design_record,
    parse_grid_arg,
    parse_points_arg,
    read_design_file,
    read_model_file,
    read_prior_csv,
    read_theta_file,
    write_json,
)
from .optimize import (
    OptimizerConfig,
    PriorSample,
    bayesian_objective,
    design_logdet,
    efficiency,
    ew_lift_one,
    exchange,
    grid_points,
    grid_search,
    lift_one,
)

EXIT_OK, EXIT_PARSE, EXIT_INFEASIBLE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="optdesign",
                     description="D-optimal designs for multinomial logit models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, theta=True, prior=False, points=True):
        p.add_argument("--model", required=True, help="model file")
        if theta:
            p.add_argument("--theta", help="parameter file (default: [theta] of the model file)")
        if prior:
            p.add_argument("--prior", required=True, help="CSV of parameter draws")
        if points:
            p.add_argument("--points", help="candidate points, e.g. 80,100,120 or 1,2;3,4")
            p.add_argument("--grid", help="grid low:high:step per factor, comma separated")
        p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
        p.add_argument("--tol", type=float, default=1e-10, help="relative tolerance")
        p.add_argument("--out", help="write a JSON record to this path")

    common(sub.add_parser("analyze", help="rank analysis of a candidate set"), theta=False)
    common(sub.add_parser("optimize-approx", help="lift-one approximate design"))
    p = sub.add_parser("optimize-exact", help="exchange exact design")
    common(p)
    p.add_argument("--n", type=int, required=True, help="number of runs")
    common(sub.add_parser("grid", help="lift-one over a grid of points"))
    common(sub.add_parser("ew", help="EW D-optimal approximate design"), theta=False, prior=True)
    p = sub.add_parser("bayes-eval", help="mean log-determinant over a prior")
    common(p, theta=False, prior=True, points=False)
    p.add_argument("design", help="design file (JSON record or text)")
    p = sub.add_parser("efficiency", help="D-efficiency of one design against another")
    common(p, points=False)
    p.add_argument("target", help="design to evaluate")
    p.add_argument("reference", help="reference design")
    p = sub.add_parser("three-point", help="closed-form three-point design")
    common(p)
    p.add_argument("--c", help="coefficients c1,c2,c3 instead of model points")
    return parser


def _config(args) -> OptimizerConfig:
    return OptimizerConfig(rng_seed=args.seed, rel_tol=args.tol)


def _theta(args, mf):
    if getattr(args, "prior", None) and getattr(args, "theta", None):
        raise ParseError("give either --theta or --prior, not both", "arguments", 0, 0)
    if getattr(args, "theta", None):
        return read_theta_file(args.theta, mf.model)
    if mf.theta is None:
        raise ParseError("no parameters: add a [theta] section or pass --theta", mf.source, 0, 0)
    return mf.theta


def _points(args, mf) -> np.ndarray:
    if args.points is not None and args.grid is not None:
        raise ParseError("give either --points or --grid, not both", "arguments", 0, 0)
    if args.points is not None:
        return parse_points_arg(args.points, mf.model.d)
    if args.grid is not None:
        return grid_points(parse_grid_arg(args.grid, mf.model.d))
    if mf.points is not None:
        return mf.points
    if mf.grid is not None:
        return grid_points(mf.grid)
    raise ParseError("no candidate points: use [points], [grid], --points or --grid",
                     mf.source, 0, 0)


def _grid(args, mf):
    if args.grid is not None:
        return parse_grid_arg(args.grid, mf.model.d)
    if mf.grid is not None:
        return mf.grid
    raise ParseError("no grid: add a [grid] section or pass --grid", mf.source, 0, 0)


def _fmt_point(x) -> str:
    return ", ".join(f"{v:g}" for v in np.ravel(x))


def _rank_lines(report: RankReport) -> list[str]:
    lines = [
        "p_j: " + " ".join(str(p) for p in report.p_blocks),
        f"p_c: {report.p_c}",
        "rank H_j: " + " ".join(str(r) for r in report.ranks_h),
        f"rank H_c: {report.rank_hc}",
        f"p_H: {report.p_H}",
        f"k_min: {report.k_min}",
        f"positive definite: {'yes' if report.pd else 'no'}",
    ]
    if report.violated:
        lines.append(f"violated: {report.violated}")
    return lines


def _rank_record(report: RankReport) -> dict:
    return {
        "p_blocks": list(report.p_blocks), "p_c": report.p_c,
        "ranks_h": list(report.ranks_h), "rank_hc": report.rank_hc,
        "p_H": report.p_H, "k_min": report.k_min, "pd": report.pd,
        "violated": report.violated, "rank_H": report.rank_H,
    }


def _print_design(design, exact: bool = False):
    vals = design.counts if exact else design.weights
    print("point\t" + ("count" if exact else "weight"))
    for x, v in zip(design.points, vals):
        if v > 0:
            print(f"{_fmt_point(x)}\t{v}" if exact else f"{_fmt_point(x)}\t{v:.4f}")


def _emit(args, record):
    if args.out:
        write_json(args.out, record)


def _lift_output(args, res, command):
    _print_design(res.design)
    print(f"log det: {res.logdet:.10g}")
    print(f"equivalence slack: {res.report.max_slack:.3e}")
    print(f"passes: {res.n_passes}  converged: {'yes' if res.converged else 'no'}  "
          f"seed: {res.seed}")
    _emit(args, {
        "command": command, "design": design_record(res.design), "logdet": res.logdet,
        "max_slack": res.report.max_slack, "slacks": res.report.slacks.tolist(),
        "passes": res.n_passes, "converged": res.converged, "seed": res.seed,
    })


def cmd_analyze(args) -> int:
    mf = read_model_file(args.model)
    report = analyze_rank(mf.model, _points(args, mf))
    print("\n".join(_rank_lines(report)))
    _emit(args, {"command": "analyze", "rank": _rank_record(report)})
    return EXIT_OK if report.pd else EXIT_INFEASIBLE


def cmd_optimize_approx(args) -> int:
    mf = read_model_file(args.model)
    res = lift_one(mf.model, _theta(args, mf), _points(args, mf), _config(args))
    _lift_output(args, res, "optimize-approx")
    return EXIT_OK


def cmd_optimize_exact(args) -> int:
    mf = read_model_file(args.model)
    if args.n < 1:
        raise ParseError("--n must be positive", "arguments", 0, 0)
    res = exchange(mf.model, _theta(args, mf), _points(args, mf), args.n, config=_config(args))
    _print_design(res.design, exact=True)
    print(f"log det: {res.logdet:.10g}")
    print(f"passes: {res.n_passes}  converged: {'yes' if res.converged else 'no'}  "
          f"seed: {res.seed}")
    _emit(args, {
        "command": "optimize-exact", "design": design_record(res.design),
        "logdet": res.logdet, "initial_logdet": res.initial_logdet,
        "passes": res.n_passes, "converged": res.converged, "seed": res.seed,
    })
    return EXIT_OK


def cmd_grid(args) -> int:
    mf = read_model_file(args.model)
    if args.points is not None:
        raise ParseError("grid takes --grid, not --points", "arguments", 0, 0)
    res = grid_search(mf.model, _theta(args, mf), _grid(args, mf), _config(args))
    _lift_output(args, res, "grid")
    return EXIT_OK


def _prior(args, mf) -> PriorSample:
    thetas, skipped = read_prior_csv(args.prior, mf.model)
    if skipped:
        print(f"skipped {skipped} invalid prior rows", file=sys.stderr)
    return PriorSample(thetas)


def cmd_ew(args) -> int:
    mf = read_model_file(args.model)
    res = ew_lift_one(mf.model, _prior(args, mf), _points(args, mf), _config(args))
    _lift_output(args, res, "ew")
    return EXIT_OK


def cmd_bayes_eval(args) -> int:
    mf = read_model_file(args.model)
    design = read_design_file(args.design, mf.model.d)
    value = bayesian_objective(mf.model, _prior(args, mf), design)
    print(f"mean log det: {value:.10g}")
    _emit(args, {"command": "bayes-eval", "design": design_record(design), "value": value})
    return EXIT_OK if np.isfinite(value) else EXIT_INFEASIBLE


def cmd_efficiency(args) -> int:
    mf = read_model_file(args.model)
    theta = _theta(args, mf)
    target = read_design_file(args.target, mf.model.d)
    reference = read_design_file(args.reference, mf.model.d)
    eff = efficiency(mf.model, theta, target, reference)
    ld_t = design_logdet(mf.model, theta, target)
    ld_r = design_logdet(mf.model, theta, reference)
    print(f"efficiency: {eff:.3f}")
    print(f"log det target: {ld_t:.10g}")
    print(f"log det reference: {ld_r:.10g}")
    _emit(args, {"command": "efficiency", "efficiency": eff,
                 "logdet_target": ld_t, "logdet_reference": ld_r})
    return EXIT_OK


def cmd_three_point(args) -> int:
    mf = read_model_file(args.model)
    if args.c is not None:
        try:
            c = [float(s) for s in args.c.split(",")]
        except ValueError:
            raise ParseError("--c needs three numbers", "--c", 1, 1) from None
        if len(c) != 3:
            raise ParseError("--c needs three numbers", "--c", 1, 1)
        C, points = None, None
    else:
        points = _points(args, mf)
        if points.shape[0] != 3:
            raise ParseError("three-point needs exactly three points", "arguments", 0, 0)
        C, *c = three_point_coefficients(mf.model, _theta(args, mf), *points.ravel())
    try:
        problem, order = ThreePointProblem.from_unsorted(*c)
    except ValueError as exc:
        raise ParseError(str(exc), "--c", 1, 1) from None
    sorted_w = solve_three_point(problem)
    w = np.empty(3)
    w[order] = sorted_w
    if C is not None:
        print(f"C: {C:.10g}")
    print("c: " + " ".join(f"{v:.10g}" for v in c))
    if points is not None:
        for x, wi in zip(points, w):
            print(f"{_fmt_point(x)}\t{wi:.4f}")
        print(f"uniform among minimal designs: "
              f"{uniform_minimal_verdict(mf.model, points).value}")
    else:
        print("weights: " + " ".join(f"{wi:.4f}" for wi in w))
    rec = {"command": "three-point", "c": list(c), "weights": w.tolist()}
    if C is not None:
        rec["C"] = C
        rec["points"] = points.tolist()
    _emit(args, rec)
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "optimize-approx": cmd_optimize_approx,
    "optimize-exact": cmd_optimize_exact,
    "grid": cmd_grid,
    "ew": cmd_ew,
    "bayes-eval": cmd_bayes_eval,
    "efficiency": cmd_efficiency,
    "three-point": cmd_three_point,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                return COMMANDS[args.command](args)
            finally:
                for w in caught:
                    print(f"warning: {w.message}", file=sys.stderr)
    except (ParseError, UnsupportedModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleDesignError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if exc.report is not None:
            print("\n".join(_rank_lines(exc.report)), file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SingularDesignError, DesignSpaceError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
