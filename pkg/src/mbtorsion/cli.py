"""Command line entry point ``mbtorsion``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .capacity import capacity_ball, capacity_variational
from .experiments import (
    ExperimentError,
    SweepConfig,
    read_csv,
    run_sweep,
    verify_lemma1,
    verify_prop1,
    verify_theorem1,
    write_csv,
)
from .geometry import GeometryError, measure, parse_shape, scale_obstacle
from .heatkernel import HeatKernel, fit_php_constants, php_deficit
from .mesh import build_mesh
from .operators import assemble
from .radial_oracle import oracle_point
from .solvers import SolverError, lowest_eigenpairs, neumann_spectrum, smallest_eigenpair, solve_torsion


def _problem(args, need_obstacle: bool):
    D = parse_shape(args.domain)
    K = None
    if args.obstacle:
        K = scale_obstacle(parse_shape(args.obstacle, obstacle=True), args.eps)
    elif need_obstacle:
        raise GeometryError("--obstacle is required")
    mesh = build_mesh(D, K, args.h)
    return mesh, assemble(mesh, dirichlet=args.dirichlet)


def cmd_torsion(args) -> int:
    mesh, A = _problem(args, need_obstacle=True)
    u = solve_torsion(A, mesh, tol=args.tol)
    print(mesh.summary())
    print(f"sup_u {u.sup_norm!r}")
    print(f"min_u {u.min!r}")
    print(f"cg_iterations {u.iterations}")
    print(f"residual {u.residual:.3e}")
    return 0


def cmd_eigen(args) -> int:
    mesh, A = _problem(args, need_obstacle=False)
    if not A.has_dirichlet:
        ed = neumann_spectrum(A, mesh, k=max(args.k, 2), tol=args.tol)
        pairs = list(zip(ed.values, ed.residuals))[: args.k]
    elif args.k == 1:
        p = smallest_eigenpair(A, mesh, tol=args.tol)
        pairs = [(p.value, p.residual)]
    else:
        ed = lowest_eigenpairs(A, args.k, mesh, tol=args.tol)
        pairs = list(zip(ed.values, ed.residuals))
    print("index,lambda,residual")
    for i, (lam, res) in enumerate(pairs):
        print(f"{i},{lam:.17g},{res:.3e}")
    return 0


def _tgrid(text: str):
    try:
        a, b, n = text.split(":")
        return np.linspace(float(a), float(b), int(n))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b:n, got {text!r}")


def cmd_php(args) -> int:
    D = parse_shape(args.domain)
    mesh = build_mesh(D, None, args.h)
    hk = HeatKernel.from_operator(assemble(mesh), mesh)
    mu = hk.decomposition.first_nonzero()
    times = args.tgrid / mu  # grid given in units of 1/mu
    print("t,deficit,trace")
    for t in times:
        print(f"{t:.17g},{php_deficit(hk, t):.17g},{hk.trace(t):.17g}")
    try:
        c = fit_php_constants(hk, times)
        print(f"# t1={c.t1:.17g},c1={c.c1:.17g},c2={c.c2:.17g},mu={mu:.17g}")
    except ValueError as exc:
        print(f"# fit rejected: {exc}")
    return 0


def cmd_capacity(args) -> int:
    K = parse_shape(args.obstacle, obstacle=True)
    r = capacity_variational(K, args.box, args.h, growth=args.growth)
    print("value,method,extrapolated")
    print(f"{r.value:.17g},{r.method},{r.extrapolated:.17g}")
    if K.kind == "ball" and not any(K.center):
        print(f"# analytic {capacity_ball(K.lengths[0], K.dimension).value:.17g}")
    return 0


def cmd_oracle(args) -> int:
    print("lambda,sup_u,product")
    for eps_r in args.epsr:
        lam, sup, prod = oracle_point(args.m, eps_r, args.R, N=args.N)
        print(f"{lam:.17g},{sup:.17g},{prod:.17g}")
    return 0


def cmd_sweep(args) -> int:
    with open(args.config) as fh:
        cfg = SweepConfig.from_json(fh.read())
    if args.workers:
        cfg.workers = args.workers
    rows = run_sweep(cfg)
    out = args.out or cfg.out
    write_csv(rows, out or sys.stdout)
    failed = [r for r in rows if r.failed]
    for r in failed:
        print(f"# eps={r.epsilon:g} {r.path} failed: {r.error}", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    if args.what == "prop1":
        if not args.domain:
            raise ExperimentError("verify prop1 needs --domain and --h")
        report = verify_prop1(parse_shape(args.domain), args.h)
    else:
        if not args.input:
            raise ExperimentError(f"verify {args.what} needs --in rows.csv")
        rows = read_csv(args.input)
        if args.what == "theorem1":
            report = verify_theorem1(rows, args.m)
        else:
            if not args.domain:
                raise ExperimentError("verify lemma1 needs --domain (and --cap for m >= 3)")
            vol = measure(parse_shape(args.domain))
            cap = args.cap
            if cap is None and args.m >= 3:
                if not args.obstacle:
                    raise ExperimentError("give --cap or a ball --obstacle")
                K = parse_shape(args.obstacle, obstacle=True)
                if K.kind != "ball":
                    raise ExperimentError("capacity default is only available for ball obstacles")
                cap = capacity_ball(K.lengths[0], args.m).value
            report = verify_lemma1(rows, args.m, cap, vol, attained=not args.bound_only)
    for line in report.lines():
        print(line)
    return 1 if report.unexpected_failures else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbtorsion", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def problem(sp, obstacle_required):
        sp.add_argument("--domain", required=True, help="e.g. disk:r=1")
        sp.add_argument("--obstacle", required=obstacle_required, help="e.g. disk:r=1 (scaled by --eps)")
        sp.add_argument("--eps", type=float, default=1.0)
        sp.add_argument("--h", type=float, required=True)
        sp.add_argument("--dirichlet", choices=("fraction", "staircase"), default="fraction")

    sp = sub.add_parser("torsion", help="torsion function summary")
    problem(sp, True)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.set_defaults(func=cmd_torsion)

    sp = sub.add_parser("eigen", help="lowest eigenvalues as CSV")
    problem(sp, False)
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.set_defaults(func=cmd_eigen)

    sp = sub.add_parser("php", help="heat-kernel deficit and trace over a time grid")
    sp.add_argument("--domain", required=True)
    sp.add_argument("--h", type=float, required=True)
    sp.add_argument("--tgrid", type=_tgrid, default=_tgrid("1:10:19"), help="a:b:n in units of 1/mu")
    sp.set_defaults(func=cmd_php)

    sp = sub.add_parser("capacity", help="variational capacity of an obstacle in R^3")
    sp.add_argument("--obstacle", required=True)
    sp.add_argument("--box", type=float, default=8.0)
    sp.add_argument("--h", type=float, default=0.05)
    sp.add_argument("--growth", type=float, default=1.1)
    sp.set_defaults(func=cmd_capacity)

    sp = sub.add_parser("oracle", help="radial reference values for concentric balls")
    sp.add_argument("--m", type=int, default=2)
    sp.add_argument("--epsr", type=float, nargs="+", required=True, help="inner (Dirichlet) radii")
    sp.add_argument("--R", type=float, default=1.0, help="outer (Neumann) radius")
    sp.add_argument("--N", type=int, default=4000)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("sweep", help="run an epsilon sweep from a JSON config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    sp.add_argument("--workers", type=int, default=0)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("verify", help="theorem1 | lemma1 | prop1 reports")
    sp.add_argument("what", choices=("theorem1", "lemma1", "prop1"))
    sp.add_argument("--in", dest="input")
    sp.add_argument("--m", type=int, default=2)
    sp.add_argument("--domain")
    sp.add_argument("--obstacle")
    sp.add_argument("--cap", type=float)
    sp.add_argument("--bound-only", action="store_true", help="lemma1: only check the upper limit")
    sp.add_argument("--h", type=float, default=1 / 32)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (GeometryError, ExperimentError, SolverError, ValueError) as exc:
        print(f"mbtorsion: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
