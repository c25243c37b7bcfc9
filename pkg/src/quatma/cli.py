"""Command-line interface: quatma <command> [options].

Exit codes: 0 success, 1 tolerance failure, 2 input error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import estimates, forms, gauduchon, grid, hlinalg, qmag, solver, verify
from .config import ConfigError, load_config

EXIT_OK, EXIT_TOLERANCE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("quatma")


class ToleranceFailure(Exception):
    pass


def _fmt(x):
    return repr(float(x))


def _out_dir(args):
    path = args.out or "."
    os.makedirs(path, exist_ok=True)
    return path


def _config(args):
    return load_config(args.config, args.set or (), seed=args.seed, threads=args.threads)


def _limit_threads(n):
    # BLAS pools read these at first use; set before heavy work starts
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


def _grid(cfg, side=None):
    return grid.TorusGrid(cfg.n, cfg.grid_sides(side))


def _smooth_profile(g, rng, amplitude):
    # depends on the grid only through sampling, so refinements see the same s
    return amplitude * grid.random_trig_field(g, rng, max_mode=1, n_terms=4)


def _rhs(cfg, g, rng):
    fam = cfg.f_family
    if fam == "const":
        return np.ones(g.shape)
    if fam == "cos":
        mode = np.zeros(g.dim)
        mode[: len(cfg.f_mode)] = cfg.f_mode
        arg = sum(2 * np.pi * mode[a] * g.coords(a) / g.periods[a] for a in range(g.dim))
        return 1.0 + cfg.f_amplitude * np.cos(arg)
    if fam == "exp":
        f = np.exp(cfg.f_k * _smooth_profile(g, rng, cfg.s_amplitude))
        return f / f.mean()
    if fam == "random":
        return 1.0 + _smooth_profile(g, rng, cfg.f_amplitude)
    n, sides, data = qmag.read_grid(cfg.f_file)
    if n != g.n or tuple(sides) != g.shape:
        raise ConfigError(f"{cfg.f_file}: grid {sides} does not match the configured grid {g.shape}")
    return data


# -- commands -----------------------------------------------------------------


def cmd_moore(args):
    A = qmag.read_matrix_text(args.matrix)
    d = hlinalg.moore_det(A)
    oracles = [hlinalg.moore_det_oracle_real(A), hlinalg.moore_det_oracle_complex(A)]
    gap = max(abs(d - o) for o in oracles) / max(1.0, abs(d))
    print(_fmt(d))
    print(f"oracle disagreement {gap:.3e}", file=sys.stderr)
    if gap > 1e-8:
        raise ToleranceFailure(f"oracle disagreement {gap:.3e} > 1e-8")
    return EXIT_OK


def cmd_solve(args):
    cfg = _config(args)
    rng = np.random.default_rng(cfg.seed)
    g = _grid(cfg)
    f = _rhs(cfg, g, rng)
    p = solver.MAProblem(g, f, scheme=cfg.scheme, normalization=cfg.normalization, rhs=cfg.rhs)
    out = _out_dir(args)
    tol = cfg.tol * float(np.abs(p.density).max())
    try:
        sol = solver.solve(p, tol=tol, max_iter=cfg.max_iter)
    except solver.ConvergenceError as exc:
        solver.write_iteration_log(os.path.join(out, "iterations.csv"), exc.history)
        raise ToleranceFailure(str(exc)) from None
    qmag.write_grid(os.path.join(out, "phi.qmag"), sol.phi, g.n)
    qmag.write_grid(os.path.join(out, "f.qmag"), f, g.n)
    solver.write_iteration_log(os.path.join(out, "iterations.csv"), sol.history)
    with open(os.path.join(out, "solution.json"), "w") as fh:
        json.dump({"A": sol.A, "residual": sol.residual_norm, "iterations": sol.iterations,
                   "phi_sup": float(np.abs(sol.phi).max())}, fh, indent=2)
    print(f"A = {_fmt(sol.A)}")
    print(f"residual = {sol.residual_norm:.3e} after {sol.iterations} Newton steps")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _config(args)
    out = _out_dir(args)
    rng_seed = cfg.seed
    reports = {}
    sides = [cfg.side] + ([cfg.refine_side] if cfg.refine_side else [])
    for side in sides:
        g = _grid(cfg, side)
        # same smooth profile on every grid: evaluate a seeded trig polynomial
        s = _smooth_profile(g, np.random.default_rng(rng_seed), cfg.s_amplitude)
        fam = estimates.exp_family(g, s, cfg.ks)
        rep = estimates.c0_sweep(g, fam, scheme=cfg.scheme, tol=None, max_iter=cfg.max_iter, workers=cfg.threads)
        name = "sweep.csv" if side == cfg.side else f"sweep_{side}.csv"
        estimates.write_sweep_csv(os.path.join(out, name), rep)
        reports[side] = rep
        print(f"side {side}: c1 = {rep.c1}, c2 = {rep.c2}, envelope {'ok' if rep.passed else 'VIOLATED'}")
    failures = [s for s, r in reports.items() if not r.passed]
    if failures:
        raise ToleranceFailure(f"envelope violated or cases failed on sides {failures}")
    if len(reports) == 2:
        a, b = (reports[s] for s in sides)
        drift = max(abs(a.c1 - b.c1) / max(abs(a.c1), 1e-300), abs(a.c2 - b.c2) / max(abs(a.c2), 1e-300))
        print(f"envelope drift under refinement {drift:.3e}")
        if drift > cfg.stability:
            raise ToleranceFailure(f"envelope constants drift {drift:.3e} > {cfg.stability}")
    return EXIT_OK


def _gauduchon_setup(cfg, rng):
    g = _grid(cfg)
    diff = grid.make_diff(g, cfg.scheme)
    space = forms.FormSpace(g.n, diff)
    if cfg.perturb == "flat" or cfg.eps == 0:
        omega = space.flat_omega()
    else:
        s = grid.random_trig_field(g, rng, max_mode=1, n_terms=4)
        s = s * (3.0 / forms.ddj_function(space, s).max_abs())
        omega = gauduchon.perturbed_omega(space, s, cfg.eps)
    if cfg.theta0 == "flat":
        theta0 = space.power(space.flat_omega(), g.n)
    else:
        theta0 = space.power(omega, g.n)
    if cfg.theta0 == "degenerate":
        # vanishes at the origin
        bump = sum(np.sin(np.pi * g.coords(a) / g.periods[a]) ** 2 for a in range(g.dim))
        theta0 = theta0 * bump
    return diff, space, omega, theta0


def cmd_gauduchon(args):
    cfg = _config(args)
    rng = np.random.default_rng(cfg.seed)
    diff, space, omega, theta0 = _gauduchon_setup(cfg, rng)
    A = gauduchon.assemble_A(diff, omega, theta0)
    Astar = gauduchon.assemble_Astar(diff, omega, theta0, A=A)
    res = gauduchon.gauduchon_generator(diff, omega, theta0, A=A, Astar=Astar, ratio_min=cfg.ratio_min)
    out = _out_dir(args)
    qmag.write_grid(os.path.join(out, "G.qmag"), res.G, diff.grid.n)
    report = {
        "sigma_1": float(res.singular_values[0]),
        "sigma_2": float(res.singular_values[1]),
        "ratio": res.ratio,
        "min_over_max": res.min_over_max,
        "integral": res.integral,
        "margin": res.margin,
        "residual": res.residual,
        "constant": bool(res.min_over_max > 1 - 1e-9),
    }
    with open(os.path.join(out, "gauduchon.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    if report["constant"]:
        print("G constant")
    print(f"min G / max G = {res.min_over_max:.6f}")
    print(f"sigma_2 / sigma_1 = {res.ratio:.3e}, margin = {res.margin:.4f}, residual = {res.residual:.3e}")
    if res.residual > 1e-8 or res.margin <= 1e-3:
        raise ToleranceFailure("Gauduchon residual or margin out of tolerance")
    return EXIT_OK


def cmd_green(args):
    cfg = _config(args)
    rng = np.random.default_rng(cfg.seed)
    diff, space, omega, theta0 = _gauduchon_setup(cfg, rng)
    gen = gauduchon.gauduchon_generator(diff, omega, theta0, ratio_min=cfg.ratio_min)
    theta = theta0 * gen.G
    A = gauduchon.assemble_A(diff, omega, theta)
    K = gauduchon.green_function(A)
    phis = [grid.random_trig_field(diff.grid, rng, max_mode=2) for _ in range(cfg.green_checks)]
    err = gauduchon.green_reproduction_error(K, A, phis) if phis else 0.0
    l1 = []
    for _ in range(cfg.l1_samples):
        l1.append(gauduchon.l1_bound(diff, gauduchon.admissible_phi(space, omega, rng), omega, A, K))
    out = _out_dir(args)
    qmag.write_grid(os.path.join(out, "green.qmag"), K.G, diff.grid.n, sides=diff.grid.shape)
    with open(os.path.join(out, "l1.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "lhs", "rhs", "chain_value", "chain_target", "min_eigenvalue", "passed"])
        for i, r in enumerate(l1):
            w.writerow([i, _fmt(r.lhs), _fmt(r.rhs), _fmt(r.chain_value), _fmt(r.chain_target),
                        _fmt(r.min_eigenvalue), r.passed])
    report = {"D1": K.D1, "D2": K.D2, "reproduction_error": err, "min_G": float(K.G.min()),
              "l1_failures": sum(not r.passed for r in l1)}
    with open(os.path.join(out, "green.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    print(f"D1 = {K.D1:.6f}, D2 = {K.D2:.6f}, reproduction error = {err:.3e}")
    print(f"L1 bound: {len(l1) - report['l1_failures']}/{len(l1)} pass")
    if err > 1e-8 or report["l1_failures"]:
        raise ToleranceFailure("Green reproduction or L1 bound failed")
    return EXIT_OK


def cmd_verify(args):
    seed = args.seed if args.seed is not None else 0
    results = verify.run_checks(seed, names=args.only or None,
                                on_result=lambda r: print(json.dumps(r.as_dict()), flush=True))
    failed = [r.name for r in results if not r.passed]
    summary = {"passed": len(results) - len(failed), "failed": failed, "total": len(results)}
    print(json.dumps({"summary": summary}))
    if args.out:
        with open(os.path.join(_out_dir(args), "verify.json"), "w") as fh:
            json.dump({"results": [r.as_dict() for r in results], "summary": summary}, fh, indent=2)
    return EXIT_TOLERANCE if failed else EXIT_OK


# -- entry point --------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--seed", type=int, metavar="U64", help="random seed (overrides the config)")
    common.add_argument("--threads", type=int, metavar="N", help="worker cap")
    common.add_argument("--out", metavar="DIR", help="output directory (default: .)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="quatma", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    m = sub.add_parser("moore", parents=[common], help="Moore determinant of a matrix file")
    m.add_argument("matrix", help="text file: one row per line, entries t or t,x,y,z")
    m.set_defaults(func=cmd_moore)
    for name, func, text in (
        ("solve", cmd_solve, "solve the Monge-Ampere equation"),
        ("sweep", cmd_sweep, "C0 estimate sweep"),
        ("gauduchon", cmd_gauduchon, "kernel of the adjoint operator"),
        ("green", cmd_green, "Green kernel and the L1 bound"),
    ):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.set_defaults(func=func)
    v = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    v.add_argument("--only", action="append", choices=sorted(verify.CHECKS), help="run selected checks")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_INPUT
        _limit_threads(args.threads)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must fit in 64 bits", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except ToleranceFailure as exc:
        print(f"tolerance failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except (ConfigError, qmag.FormatError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except gauduchon.GauduchonError as exc:
        print(f"tolerance failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
