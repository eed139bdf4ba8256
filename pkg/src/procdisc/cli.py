"""Command line front end: ``procdisc <command> ...``.

Exit codes: 0 success, 1 solver not optimal or a check failed, 2 input error.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import conic
from .certify import kkt_residuals, verify_tester
from .choi import TesterSet, validate_tester
from .io import (VERSION, ProblemFileError, certificate_from_json, certificate_to_json, dumps, load_json,
                 load_problem, tester_from_json, tester_to_json)
from .minimax import solve_minimax, twirl_mu
from .sdp import UnsupportedDescriptor, solve_primal, solve_primal_dual
from .symmetry import check_symmetric, twirl_dual, twirl_tester
from .unital import (UnitalStructureError, breakpoints, cone_apexes, extract_params, popt_curve,
                     popt_legendre)

log = logging.getLogger("procdisc")

EXIT_OK, EXIT_NONOPTIMAL, EXIT_INPUT = 0, 1, 2
RELOAD_TOL = 1e-6


class InputError(Exception):
    pass


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def parse_grid(text: str) -> np.ndarray:
    """``a:b:step`` -> points a, a+step, ... <= b (inclusive within rounding)."""
    try:
        a, b, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise InputError(f"--grid must look like a:b:step, got {text!r}") from None
    if step <= 0 or b < a:
        raise InputError(f"degenerate grid {text!r}: need step > 0 and b >= a")
    n = int(np.floor((b - a) / step + 1e-9)) + 1
    return np.round(a + step * np.arange(n), 12)


def _opts(args) -> conic.SolverOptions:
    o = conic.SolverOptions()
    if getattr(args, "max_iter", None):
        o.max_iter = args.max_iter
    return o


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _finish(report: dict, args, started: float) -> str:
    if not args.deterministic:
        report["timing"] = {"wall_time": time.perf_counter() - started,
                            "timestamp": datetime.now(timezone.utc).isoformat()}
    return dumps(report)


def _solve_report(spec, args):
    tol = args.tol
    if spec.descriptor is TesterSet.NONADAPTIVE:
        tester, value, rep = solve_primal(spec, _opts(args))
        status = "optimal" if rep.optimal else "not_converged"
        body = {"status": status, "value": value, "primal_value": value, "dual_value": None, "gap": None,
                "tester": tester_to_json(tester), "certificate": None, "kkt": None,
                "iterations": {"primal": rep.iterations}}
        return body, tester, status == "optimal"
    res = solve_primal_dual(spec, _opts(args), gap_tol=tol)
    body = {
        "status": res.status,
        "value": res.value,
        "primal_value": res.primal_value,
        "dual_value": res.dual_value,
        "gap": res.gap,
        "tester": tester_to_json(res.tester),
        "certificate": certificate_to_json(res.certificate),
        "kkt": {**res.residuals.as_dict(), "ok": res.residuals.ok(tol)},
        "iterations": {"primal": res.primal_report.iterations, "dual": res.dual_report.iterations},
    }
    return body, res.tester, res.optimal and res.residuals.ok(tol)


def cmd_solve(args) -> int:
    started = time.perf_counter()
    pf = load_problem(args.problem)
    spec = pf.spec()
    body, tester, ok = _solve_report(spec, args)
    val = validate_tester(tester, RELOAD_TOL)
    report = {"version": VERSION, "command": "solve", "strategy": pf.strategy,
              "tester_set": spec.descriptor.value, **body,
              "validation": {"tester_ok": val.ok, **val.residuals}}
    _emit(_finish(report, args, started), args.out)
    return EXIT_OK if ok else EXIT_NONOPTIMAL


def cmd_curve(args) -> int:
    pf = load_problem(args.problem)
    param = args.param
    needs = {"p_inc": "inconclusive", "p_np": "neyman_pearson"}
    if param not in needs:
        raise InputError(f"--param must be one of {sorted(needs)}")
    if pf.kind != needs[param]:
        raise InputError(f"strategy {pf.kind!r} has no parameter {param!r}")
    grid = parse_grid(args.grid)
    if np.any(grid < 0) or np.any(grid > 1):
        raise InputError("grid points must lie in [0, 1]")
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["param", "value", "gap", "iterations"])
    all_ok = True
    for p in grid:
        spec = pf.spec(**{param: float(p)})
        res = solve_primal_dual(spec, _opts(args), gap_tol=args.tol)
        all_ok &= res.optimal
        it = res.primal_report.iterations + res.dual_report.iterations
        w.writerow([_fmt(p), _fmt(res.value), _fmt(res.gap), it])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK if all_ok else EXIT_NONOPTIMAL


def cmd_unital(args) -> int:
    started = time.perf_counter()
    pf = load_problem(args.problem)
    R = args.R or pf.unital.get("R")
    if R is None:
        raise InputError("the number of channels R is needed (--R or unital.R)")
    try:
        params = extract_params(pf.combs[0], int(R), pf.unital.get("U"))
    except UnitalStructureError as e:
        raise InputError(str(e)) from None
    except ValueError as e:
        raise InputError(f"unital structure: {e}") from None
    if len(pf.combs) != params.R:
        raise InputError(f"the file has {len(pf.combs)} channels, but R = {params.R}")
    for r, (given, expected) in enumerate(zip(pf.combs, params.family())):
        if np.max(np.abs(given.matrix - expected.matrix)) > 1e-8:
            raise InputError(f"combs[{r}] is not U^{r} applied to combs[0]; the file is not a cyclic family")
    if not params.pauli:
        raise InputError("the analytic curve needs s1 = t1 = 0 (Pauli-type channel)")
    bp = breakpoints(params)
    curve = popt_curve(params)
    grid = parse_grid(args.grid)
    rows, worst = [], 0.0
    for p in grid:
        res = solve_primal_dual(params.problem(float(p)), _opts(args), gap_tol=args.tol)
        closed = curve.evaluate(float(p))
        worst = max(worst, abs(res.value - closed), res.gap)
        rows.append((p, closed, curve.segments[0][1] + curve.segments[0][0] * p,
                     curve.segments[1][1] + curve.segments[1][0] * p, popt_legendre(params, float(p)), res.value))
    agree = worst <= args.tol
    apex = lambda v: [v.x, v.y, v.z]  # noqa: E731
    v00, v01, v11 = cone_apexes(params, 1.0)
    report = {
        "version": VERSION, "command": "unital",
        "params": {k: getattr(params, k) for k in ("R", "s0", "s1", "s2", "t0", "t1", "t2")},
        "upsilon00": apex(v00), "upsilon01": apex(v01), "upsilon11_per_q": apex(v11),
        "upsilon_prime": apex(bp.upsilon_prime), "sigma1": apex(bp.sigma1),
        "q0": bp.q0, "q1": bp.q1, "p0": bp.p0,
        "branches": [{"slope": s, "intercept": c} for s, c in curve.segments],
        "cross_check": {"agree": agree, "max_deviation": worst, "tol": args.tol, "points": len(rows)},
    }
    if args.csv:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p_inc", "popt", "branch0", "branch1", "legendre", "solver"])
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        _emit(buf.getvalue(), args.csv)
    _emit(_finish(report, args, started), args.out)
    return EXIT_OK if agree else EXIT_NONOPTIMAL


def _load_solution(path, spec):
    data = load_json(path)
    tester = tester_from_json(data.get("tester") or {}, spec.layout)
    cert = certificate_from_json(data["certificate"]) if data.get("certificate") else None
    return tester, cert


def cmd_certify(args) -> int:
    started = time.perf_counter()
    pf = load_problem(args.problem)
    spec = pf.spec()
    tester, cert = _load_solution(args.solution, spec)
    if tester.M != spec.M:
        raise InputError(f"solution has {tester.M} tester elements, problem has {spec.M}")
    if cert is not None:
        res = kkt_residuals(tester, cert, spec)
        ok, mode = res.ok(args.tol), "certificate"
    else:
        if spec.J:
            raise InputError("a constrained problem needs the dual certificate in the solution file")
        q = np.zeros(0)
        verdict = verify_tester(tester, q, spec, args.tol)
        res, ok, mode = verdict.residuals, verdict.optimal, "tester_only"
    val = validate_tester(tester, args.tol)
    failed = [k for k, v in res.as_dict().items() if v > args.tol]
    report = {"version": VERSION, "command": "certify", "mode": mode, "pass": bool(ok and val.ok),
              "residuals": res.as_dict(), "failed": failed, "validation": {"tester_ok": val.ok, **val.residuals},
              "tol": args.tol}
    _emit(_finish(report, args, started), args.out)
    return EXIT_OK if report["pass"] else EXIT_NONOPTIMAL


def cmd_minimax(args) -> int:
    started = time.perf_counter()
    pf = load_problem(args.problem)
    spec = pf.minimax_spec()
    sol = solve_minimax(spec, _opts(args), tol=args.tol)
    report = {"version": VERSION, "command": "minimax", "value": sol.value, "mu": sol.mu.tolist(),
              "q_values": sol.q_values.tolist(), "saddle_residual": sol.saddle_residual,
              "saddle_ok": sol.report.ok, "mu_source": sol.mu_source, "tester": tester_to_json(sol.tester)}
    if pf.symmetry is not None and len(pf.symmetry.perm(0, "k")) == spec.K:
        report["mu_twirled"] = twirl_mu(sol.mu, pf.symmetry).tolist()
    _emit(_finish(report, args, started), args.out)
    return EXIT_OK if sol.report.ok else EXIT_NONOPTIMAL


def cmd_symmetrize(args) -> int:
    started = time.perf_counter()
    pf = load_problem(args.problem)
    if pf.symmetry is None:
        raise InputError("the problem file has no symmetry block")
    spec = pf.spec()
    sym = check_symmetric(spec, pf.symmetry)
    tester, cert = _load_solution(args.solution, spec)
    tw = twirl_tester(tester, pf.symmetry)
    before, after = spec.objective(tester), spec.objective(tw)
    report = {"version": VERSION, "command": "symmetrize", "symmetric": sym.ok, "violations": sym.violations,
              "objective_before": before, "objective_after": after, "tester": tester_to_json(tw)}
    ok = sym.ok and abs(after - before) <= 1e-9 * max(1.0, abs(before))
    if cert is not None:
        ctw = twirl_dual(cert, pf.symmetry, spec)
        report["certificate"] = certificate_to_json(ctw)
        report["dual_before"], report["dual_after"] = cert.value(spec), ctw.value(spec)
        res = kkt_residuals(tw, ctw, spec)
        report["kkt"] = {**res.as_dict(), "ok": res.ok(args.tol)}
    _emit(_finish(report, args, started), args.out)
    return EXIT_OK if ok else EXIT_NONOPTIMAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="procdisc", description="Optimal discrimination of quantum processes.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help="write the report here instead of stdout"):
        sp.add_argument("--tol", type=float, default=1e-4, help="gap / residual tolerance (default 1e-4)")
        sp.add_argument("--max-iter", type=int, default=None, help="ADMM iteration cap")
        sp.add_argument("--out", default=None, help=out_help)
        sp.add_argument("--deterministic", action="store_true",
                        help="omit the timing field so identical inputs give identical bytes")

    sp = sub.add_parser("solve", help="solve primal and dual, report certificate and residuals")
    sp.add_argument("problem")
    common(sp)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("curve", help="sweep a strategy parameter and write CSV")
    sp.add_argument("problem")
    sp.add_argument("--param", default="p_inc")
    sp.add_argument("--grid", required=True, help="a:b:step")
    common(sp, "write the CSV here instead of stdout")
    sp.set_defaults(fn=cmd_curve)

    sp = sub.add_parser("unital", help="closed-form analysis of a cyclic unital qubit family")
    sp.add_argument("problem")
    sp.add_argument("--R", type=int, default=None)
    sp.add_argument("--grid", default="0:1:0.1", help="p_inc points for the cross-check")
    sp.add_argument("--csv", default=None, help="write the curve CSV here")
    common(sp)
    sp.set_defaults(fn=cmd_unital)

    sp = sub.add_parser("certify", help="check optimality conditions of a stored solution")
    sp.add_argument("problem")
    sp.add_argument("solution")
    common(sp)
    sp.set_defaults(fn=cmd_certify)

    sp = sub.add_parser("minimax", help="minimax tester over unknown priors")
    sp.add_argument("problem")
    common(sp)
    sp.set_defaults(fn=cmd_minimax)

    sp = sub.add_parser("symmetrize", help="twirl a stored solution over the problem's symmetry group")
    sp.add_argument("problem")
    sp.add_argument("solution")
    common(sp)
    sp.set_defaults(fn=cmd_symmetrize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except (ProblemFileError, InputError, UnsupportedDescriptor) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
