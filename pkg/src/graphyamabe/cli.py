"""Command-line front end: ``graphyamabe {solve,limit,verify,oracle}``.

Exit codes: 0 success or pass, 1 computational failure or failed
verification, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .continuation import LimitCertificate, PSchedule, run_continuation, trace_row, write_trace_csv
from .errors import BoundViolation, ContinuationError, ConvergenceError, YamabeError
from .graph import load_graph
from .solver import SolverConfig, check_lemma2_bounds, check_lemma3_bounds, minimize_I
from .verifier import MAX_ORACLE_VERTICES, brute_force_search, default_grid, verify_certificate, verify_inclusion

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class _InputError(Exception):
    pass


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonnegative(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphyamabe", description="p-Yamabe solver and 1-Yamabe certificates on weighted graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, tol_default):
        p.add_argument("--graph", required=True, help="graph JSON file")
        p.add_argument("--alpha", required=True, type=float, help="exponent alpha > 1")
        p.add_argument("--tol", type=_nonnegative, default=tol_default)
        p.add_argument("--tol-zero", type=_nonnegative, default=None)
        p.add_argument("--quiet", action="store_true")

    def solver_flags(p):
        p.add_argument("--grad-tol", type=_positive, default=1e-10)
        p.add_argument("--max-iters", type=int, default=50_000)

    p = sub.add_parser("solve", help="solve the p-Yamabe equation at one p")
    common(p, 1e-6)
    solver_flags(p)
    p.add_argument("--p", required=True, type=float)
    p.add_argument("--out", help="PSolution JSON (stdout when omitted)")

    p = sub.add_parser("limit", help="continue p down to 1 and certify the limit")
    common(p, 1e-6)
    solver_flags(p)
    p.add_argument("--p0", type=float, default=None)
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--p-min", type=float, default=1.0 + 1e-4)
    p.add_argument("--out", help="certificate JSON (stdout when omitted)")
    p.add_argument("--trace", help="per-p trace CSV")

    p = sub.add_parser("verify", help="check a candidate u or a certificate")
    common(p, None)
    p.add_argument("--candidate", required=True, help="bare {id: value} map or certificate JSON")

    p = sub.add_parser("oracle", help="enumerate passing grid candidates on a tiny graph")
    common(p, None)
    p.add_argument("--step", type=_positive, default=0.05, help="uniform grid step")
    p.add_argument("--out", help="candidate list JSON (stdout when omitted)")
    return parser


def _say(args, *parts):
    if not args.quiet:
        print(*parts)


def _emit_json(doc, path, args):
    text = json.dumps(doc, indent=2) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_json(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _InputError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise _InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _config(args) -> SolverConfig:
    if args.max_iters < 1:
        raise _InputError("--max-iters must be a positive integer")
    return SolverConfig(grad_tol=args.grad_tol, max_iters=args.max_iters)


def cmd_solve(args) -> int:
    graph, data = load_graph(args.graph, args.alpha)
    if not 1.0 < args.p < data.alpha:
        raise _InputError(f"--p must satisfy 1 < p < alpha (requirement p < alpha; got p={args.p:g}, alpha={data.alpha:g})")
    cfg = _config(args)
    # the human summary goes to stderr when the JSON itself goes to stdout
    out = sys.stdout if args.out else sys.stderr
    try:
        sol = minimize_I(args.p, data, graph, cfg)
    except ConvergenceError as exc:
        _emit_json(exc.best.to_dict(graph), args.out, args)
        if not args.quiet:
            print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _emit_json(sol.to_dict(graph), args.out, args)
    status = EXIT_OK
    if not args.quiet:
        print(f"p={sol.p:g}  lambda={sol.lam:.12g}", file=out)
        print(f"max u={np.max(sol.u):.12g}  min u={np.min(sol.u):.12g}", file=out)
        print(f"el_residual={sol.el_residual:.3e}  structured={sol.structured_residual:.3e}  "
              f"constraint={sol.constraint_residual:.1e}  iters={sol.iters}", file=out)
    for rep in (check_lemma2_bounds(sol, data, graph), check_lemma3_bounds(sol, data, graph)):
        if not args.quiet:
            verdict = "ok" if rep.passed else "VIOLATED"
            print(f"{rep.name}: {rep.lower:.6g} <= {rep.observed:.6g} <= {rep.upper:.6g}  {verdict}", file=out)
        if not rep.passed:
            status = EXIT_FAIL
    return status


def cmd_limit(args) -> int:
    graph, data = load_graph(args.graph, args.alpha)
    schedule = PSchedule.geometric(data.alpha, args.p0, args.ratio, args.p_min)
    cfg = _config(args)
    out = sys.stdout if args.out else sys.stderr
    try:
        cert = run_continuation(schedule, data, graph, cfg)
    except ContinuationError as exc:
        if args.trace:
            write_trace_csv([trace_row(s, data, graph) for s in exc.series], args.trace)
        if not args.quiet:
            print(f"continuation failed: {exc} ({len(exc.series)} of {len(schedule)} values solved)", file=sys.stderr)
        return EXIT_FAIL
    _emit_json(cert.to_dict(graph), args.out, args)
    if args.trace:
        cert.write_trace(args.trace)
    report = verify_certificate(cert, data, graph, args.tol, args.tol_zero)
    if not args.quiet:
        ident = float(np.max(np.abs(cert.inclusion_residual)))
        print(f"p_final={cert.p_final:.8g}  tail_delta={cert.tail_delta:.3e}  identity residual={ident:.3e}", file=out)
        for msg in cert.warnings:
            print(f"warning: {msg}", file=out)
        print(f"certificate {'PASSES' if report.passed else 'FAILS'} at tol={args.tol:g}", file=out)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    graph, data = load_graph(args.graph, args.alpha)
    doc = _read_json(args.candidate)
    if isinstance(doc, dict) and {"u", "xi", "eta"} <= set(doc):
        cert = LimitCertificate.from_dict(doc, graph)
        tol = 1e-6 if args.tol is None else args.tol
        report = verify_certificate(cert, data, graph, tol, args.tol_zero)
        _say(args, report.inclusion.table())
        if not args.quiet:
            ident = float(np.max(np.abs(report.identity_residual)))
            print(f"identity residual={ident:.3e}")
            for label, items in (("identity", report.identity_failures), ("xi membership", report.xi_failures),
                                 ("eta membership", report.eta_failures), ("range", report.range_failures)):
                if items:
                    print(f"{label} failures: {items}")
            print(f"certificate {'PASSES' if report.passed else 'FAILS'} at tol={tol:g}")
        return EXIT_OK if report.passed else EXIT_FAIL
    if not isinstance(doc, dict):
        raise _InputError("candidate must be an object {id: value} or a certificate")
    u = graph.field(doc, "candidate")
    report = verify_inclusion(u, data, graph, args.tol, args.tol_zero)
    _say(args, report.table())
    if report.trivial:
        _say(args, "trivial solution (u = 0)")
    _say(args, f"inclusion {'PASSES' if report.overall else 'FAILS'} at tol={report.tol:g}")
    return EXIT_OK if report.overall else EXIT_FAIL


def cmd_oracle(args) -> int:
    graph, data = load_graph(args.graph, args.alpha)
    if graph.n > MAX_ORACLE_VERTICES:
        raise _InputError(f"oracle is limited to {MAX_ORACLE_VERTICES} vertices, graph has {graph.n}")
    grid = default_grid(data, graph, args.step)
    found = brute_force_search(data, graph, grid, args.tol)
    _emit_json([graph.as_mapping(u) for u in found], args.out, args)
    if args.out:
        _say(args, f"{len(found)} passing candidates out of {len(grid) ** graph.n}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "limit": cmd_limit, "verify": cmd_verify, "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except BoundViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (_InputError, YamabeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
