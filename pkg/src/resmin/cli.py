"""Command-line front end: ``resmin {solve,import,minimize,compare,work-precision}``.

Exit codes: 0 on success, 2 for bad input or integrator failure, 3 when an
optimizer did not converge on some stage (partial results are still
written, including the JSON summary).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import closedform, dp45, minres, problems, residual
from .errors import NonConvergence, ResminError
from .skeleton import load_skeleton, save_skeleton

EXIT_OK, EXIT_INPUT, EXIT_NONCONV = 0, 2, 3


class CliError(Exception):
    """Input or integrator failure reported with exit code 2."""


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, allow_nan=True) + "\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, str)) else _fmt(v) for v in row])


def _problem(args):
    try:
        return problems.from_spec(args.problem)
    except ValueError as exc:
        raise CliError(f"cannot parse problem spec: {exc}") from exc


def _integrate(sys_, args):
    y0 = args.y0
    if y0 is None:
        raise CliError("--y0 is required")
    if len(y0) != sys_.dim:
        raise CliError(f"--y0 has {len(y0)} entries, problem {sys_.name} needs {sys_.dim}")
    try:
        return dp45.integrate(sys_, args.t0, args.tf, y0, rtol=args.rtol, atol=args.atol)
    except (ResminError, ArithmeticError, ValueError) as exc:
        raise CliError(f"integration failed: {type(exc).__name__}: {exc}") from exc


def _skeleton_source(sys_, args):
    """Skeleton plus a C1 curve through it to measure against."""
    if args.skeleton and args.solve_first:
        raise CliError("give either --skeleton or --solve-first, not both")
    if args.solve_first:
        sol = _integrate(sys_, args)
        return dp45.skeleton_of(sol), residual.dense_curve(sol), "dp45-dense"
    if not args.skeleton:
        raise CliError("a skeleton source is required: --skeleton FILE or --solve-first")
    skel = load_skeleton(args.skeleton)
    if skel.dim != sys_.dim:
        raise CliError(f"skeleton has dimension {skel.dim}, problem {sys_.name} needs {sys_.dim}")
    return skel, residual.hermite_curve(sys_, skel), "cubic-hermite"


def _config(args) -> minres.TranscriptionConfig:
    try:
        return minres.TranscriptionConfig(M=args.subintervals, scheme=args.scheme)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


# -- stage results shared by minimize and compare ----------------------------------

def _solve_stages(sys_, skel, norm, args, cfg):
    """Return ``(per-stage table, csv rows, failures, closed_form)``."""
    if closedform.has_closed_form(sys_) and not args.force_numeric:
        try:
            stages = closedform.stage_solutions(sys_, skel, norm)
        except (ResminError, ArithmeticError) as exc:
            raise CliError(f"closed form failed: {exc}") from exc
        nsamp = max(args.refine, 2)
        table, rows = [], []
        for st_obj, st in zip(stages, skel.stages()):
            t = np.linspace(st.t_start, st.t_end, nsamp + 1)
            x, u = np.atleast_1d(st_obj.x(t)), np.atleast_1d(st_obj.u(t))
            obj, mx = st_obj.objective, st_obj.max_abs_u
            table.append({"stage": st.index, "t_start": st.t_start, "t_end": st.t_end,
                          "objective": float(obj), "max_abs_u": float(mx), "converged": True})
            rows.extend((st.index, tk, [xk], [uk]) for tk, xk, uk in zip(t, x, u))
        return table, rows, [], True
    res = minres.minimize_skeleton(sys_, skel, norm, cfg)
    table = res.summary()["stages"]
    rows = []
    for s in res.solutions:
        if s is None:
            continue
        xc = 0.5 * (s.X[:-1] + s.X[1:])
        rows.extend((s.stage.index, tk, xk, uk) for tk, xk, uk in zip(s.tc, xc, s.u))
    return table, rows, res.failures, False


def _summary(problem, norm, table, failures, closed):
    return {
        "problem": problem.spec, "norm": norm, "closed_form": closed,
        "n_stages": len(table),
        "total_objective": float(sum(r["objective"] for r in table)),
        "global_max": max((r["max_abs_u"] for r in table), default=0.0),
        "stages": table, "failures": failures,
    }


def _outputs(prefix: str):
    p = Path(prefix)
    if p.suffix in (".json", ".csv"):
        p = p.with_suffix("")
    return p.with_suffix(".csv"), p.with_suffix(".json")


# -- subcommands ---------------------------------------------------------------------

def cmd_solve(args) -> int:
    sys_ = _problem(args)
    sol = _integrate(sys_, args)
    skel = dp45.skeleton_of(sol)
    save_skeleton(skel, args.output, format=args.format)
    if args.dense_csv:
        if skel.n_stages:
            from .skeleton import refine_mesh
            t = refine_mesh(skel.times, args.refine)
            y, dy = dp45.dense_eval(sol, t)
            r = dy - np.asarray(sys_.f(t, y))
        else:
            t, y, r = skel.times, skel.values, np.zeros_like(skel.values)
        n = sys_.dim
        _write_rows(args.dense_csv,
                    ["t"] + [f"x_{j}" for j in range(1, n + 1)] + [f"r_{j}" for j in range(1, n + 1)],
                    ([tk, *yk, *rk] for tk, yk, rk in zip(t, y, r)))
    print(f"{skel.n_stages} steps ({sol.n_rejected} rejected, {sol.n_fev} f-evals); "
          f"x({args.tf}) = {skel.values[-1].tolist()}")
    return EXIT_OK


def cmd_import(args) -> int:
    skel = load_skeleton(args.skeleton)
    if args.output:
        save_skeleton(skel, args.output, format=args.format)
    doc = {"n_nodes": len(skel), "n_stages": skel.n_stages, "dim": skel.dim,
           "t0": float(skel.times[0]), "tf": float(skel.times[-1]),
           "mean_h": skel.mean_stepsize()}
    print(json.dumps(doc))
    return EXIT_OK


def cmd_minimize(args) -> int:
    sys_ = _problem(args)
    norm = args.norm.replace("-", "_")
    cfg = _config(args)
    skel, _, _ = _skeleton_source(sys_, args)
    table, rows, failures, closed = _solve_stages(sys_, skel, norm, args, cfg)
    csv_path, json_path = _outputs(args.output)
    summary = _summary(sys_, norm, table, failures, closed)
    n = sys_.dim
    if args.format == "json":
        _write_json(csv_path.with_suffix(".stages.json"),
                    [{"stage": i, "t": t, "x": list(map(float, x)), "u": list(map(float, u))}
                     for i, t, x, u in rows])
    else:
        _write_rows(csv_path, ["stage", "t"] + [f"x_{j}" for j in range(1, n + 1)]
                    + [f"u_{j}" for j in range(1, n + 1)],
                    ([i, t, *x, *u] for i, t, x, u in rows))
    _write_json(json_path, summary)
    print(f"{norm}: {summary['n_stages']} stages, global max {summary['global_max']:.6g}, "
          f"total objective {summary['total_objective']:.6g}"
          + (" (closed form)" if closed else ""))
    if any(f["error"] == "NonConvergence" for f in failures):
        return EXIT_NONCONV
    if failures:
        raise CliError("; ".join(f"stage {f['stage']}: {f['message']}" for f in failures))
    return EXIT_OK


def cmd_compare(args) -> int:
    sys_ = _problem(args)
    cfg = _config(args)
    skel, curve, curve_name = _skeleton_source(sys_, args)
    rep = residual.report(sys_, curve, skel, refine=args.refine)
    t2, _, f2, c2 = _solve_stages(sys_, skel, "l2", args, cfg)
    ti, _, fi, ci = _solve_stages(sys_, skel, "stage_linf", args, cfg)
    rows = []
    for k, st in enumerate(skel.stages()):
        rows.append({"stage": st.index, "t_start": st.t_start, "t_end": st.t_end,
                     "interpolant_sup": float(rep.stage_sup[k]),
                     "l2_sup": t2[k]["max_abs_u"] if k < len(t2) else float("nan"),
                     "linf_alpha": ti[k]["max_abs_u"] if k < len(ti) else float("nan")})
    glob = {"interpolant": rep.global_max,
            "l2": max((r["l2_sup"] for r in rows), default=0.0),
            "stage_linf": max((r["linf_alpha"] for r in rows), default=0.0)}
    summary = {"problem": sys_.spec, "interpolant": curve_name, "closed_form": c2 and ci,
               "global_max": glob, "stages": rows, "failures": {"l2": f2, "stage_linf": fi}}
    csv_path, json_path = _outputs(args.output)
    _write_rows(csv_path, ["stage", "t_start", "t_end", "interpolant_sup", "l2_sup", "linf_alpha"],
                ([r["stage"], r["t_start"], r["t_end"], r["interpolant_sup"], r["l2_sup"],
                  r["linf_alpha"]] for r in rows))
    _write_json(json_path, summary)
    print(f"{'stage':>5} {'interp sup':>12} {'L2 sup':>12} {'Linf alpha':>12}")
    for r in rows:
        print(f"{r['stage']:>5} {r['interpolant_sup']:>12.4e} {r['l2_sup']:>12.4e} "
              f"{r['linf_alpha']:>12.4e}")
    print(f"{'max':>5} {glob['interpolant']:>12.4e} {glob['l2']:>12.4e} {glob['stage_linf']:>12.4e}")
    if any(f["error"] == "NonConvergence" for f in f2 + fi):
        return EXIT_NONCONV
    return EXIT_OK


def cmd_work_precision(args) -> int:
    sys_ = _problem(args)
    if args.y0 is None or len(args.y0) != sys_.dim:
        raise CliError(f"--y0 must have {sys_.dim} entries")
    try:
        wp = residual.work_precision(sys_, args.t0, args.tf, args.y0, nsamp=args.nsamp,
                                     refine=args.refine)
    except RuntimeError as exc:
        raise CliError(str(exc)) from exc
    csv_path, json_path = _outputs(args.output)
    wp.write_csv(csv_path)
    _write_json(json_path, {"problem": sys_.spec, **wp.summary()})
    flag = " (low confidence)" if wp.low_confidence else ""
    print(f"fitted slope {wp.slope:.4f}{flag} over k = {wp.fit_k.tolist()}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------

def _add_ivp(p, required=True):
    p.add_argument("--problem", required=required,
                   help="dahlquist:a=VALUE, sqrt, vdp or sho")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--tf", type=float, default=1.0)
    p.add_argument("--y0", type=_floats, help="initial state, comma separated")
    p.add_argument("--rtol", type=float, default=1e-6)
    p.add_argument("--atol", type=float, default=1e-6)


def _add_minres(p):
    p.add_argument("--skeleton", help="skeleton file (JSON or CSV)")
    p.add_argument("--solve-first", action="store_true",
                   help="integrate with DP45 first and use its skeleton")
    p.add_argument("--subintervals", type=int, default=2000, help="grid points M per stage")
    p.add_argument("--scheme", choices=minres.SCHEMES, default="midpoint")
    p.add_argument("--force-numeric", action="store_true",
                   help="use the transcription even when a closed form exists")
    p.add_argument("--refine", type=int, default=8, help="samples per stage in the output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resmin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="integrate with DP45 and write the skeleton")
    _add_ivp(p)
    p.add_argument("-o", "--output", default="skeleton.json")
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.add_argument("--dense-csv", help="also write dense-output samples and residuals")
    p.add_argument("--refine", type=int, default=8)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("import", help="validate and convert an external skeleton")
    p.add_argument("skeleton")
    p.add_argument("-o", "--output")
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("minimize", help="minimal-residual interpolation of a skeleton")
    _add_ivp(p)
    _add_minres(p)
    p.add_argument("--norm", choices=("l2", "stage-linf"), default="l2")
    p.add_argument("-o", "--output", default="minimize")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("compare", help="interpolant vs minimal L2 vs minimal stage-Linf")
    _add_ivp(p)
    _add_minres(p)
    p.add_argument("-o", "--output", default="compare")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("work-precision", help="residual order of DP45 dense output")
    _add_ivp(p)
    p.add_argument("--nsamp", type=int, default=40)
    p.add_argument("--refine", type=int, default=8)
    p.add_argument("-o", "--output", default="work_precision")
    p.set_defaults(func=cmd_work_precision)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ResminError, ValueError, ArithmeticError, OSError) as exc:
        if isinstance(exc, NonConvergence):
            print(f"resmin: {exc}", file=sys.stderr)
            return EXIT_NONCONV
        print(f"resmin: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
