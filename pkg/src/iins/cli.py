"""Command-line entry point ``iins``.

Subcommands: ``run``, ``linstab``, ``decompose``, ``verify-hydrostatic``,
``bihari-check`` and ``report``.  ``IINS_OUTDIR`` overrides the output
directory and ``IINS_THREADS`` caps the BLAS/OpenMP thread count; it must be
set before numpy loads, which is why the heavy imports live inside the
command functions.

Exit codes: 0 pass, 1 check failure, 2 incomplete inputs, 3 solver abort.
"""
from __future__ import annotations

import argparse
import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_threads(environ=os.environ):
    n = environ.get("IINS_THREADS")
    if n:
        for var in _THREAD_VARS:
            environ.setdefault(var, n)


_apply_threads()


def _parse_set(items):
    """``section.key=value`` overrides as configuration text."""
    by_sec = {}
    for item in items or ():
        try:
            lhs, value = item.split("=", 1)
            sec, key = lhs.split(".", 1)
        except ValueError:
            raise SystemExit(f"--set expects section.key=value, got {item!r}") from None
        by_sec.setdefault(sec.strip(), []).append(f"{key.strip()} = {value.strip()}")
    return "\n".join(f"[{s}]\n" + "\n".join(v) for s, v in by_sec.items())


def _load_config(args):
    from . import config as cfgmod
    from .scenarios import scenario

    if args.config:
        cfg = cfgmod.load(args.config)
    else:
        cfg = scenario(args.scenario or "rest")
    if getattr(args, "set", None):
        cfg = cfgmod.loads(_parse_set(args.set), base=cfg)
    cfg = cfgmod.apply_env(cfg)
    if getattr(args, "outdir", None):
        cfg["io"]["outdir"] = args.outdir
    return cfg


def cmd_run(args):
    from .report import EXIT_ABORT, EXIT_INCOMPLETE, report
    from .scenarios import run_config
    from .solver import SolverAbort, StiffnessError
    from .elliptic import SolverError

    cfg = _load_config(args)
    outdir = cfg["io"]["outdir"]
    try:
        out = run_config(cfg, outdir, restart=args.restart, max_steps=args.max_steps)
    except (SolverAbort, SolverError, StiffnessError) as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    text, code = report(outdir)
    print(text, end="")
    if out.summary.status != "complete":
        return EXIT_INCOMPLETE
    return code


def cmd_report(args):
    from .report import report

    text, code = report(args.outdir, write=not args.no_write)
    print(text, end="")
    return code


def cmd_linstab(args):
    import numpy as np

    from .grid import Grid
    from .linstab import dispersion_scan, most_unstable
    from .scenarios import scan_wavenumbers, stability_template

    cfg = _load_config(args)
    gc = cfg["grid"]
    nz = args.nz or gc["nz"]
    grid = Grid(gc["nx"], nz, gc["Lx"], gc["h"])
    tmpl = stability_template(cfg, grid)
    ks = scan_wavenumbers(grid, args.kmax) if args.k is None else np.array(args.k, dtype=float)
    results = dispersion_scan(tmpl, ks, args.out)
    for k, r in zip(ks, results):
        print(f"k={k:.6g} Lambda={r.Lambda.real:.10e}{r.Lambda.imag:+.3e}j residual={r.variational_residual:.2e}")
    best = most_unstable(results)
    print(f"most unstable: k={best.k:.6g} Lambda={best.Lambda.real:.10e}")
    return 0


def _potential_and_profile(cfg, grid):
    from .scenarios import build_potential, build_profile

    pot = build_potential(cfg, grid)
    return pot, build_profile(cfg, pot)


def cmd_decompose(args):
    from . import snapshot as snap
    from .elliptic import helmholtz_decompose, orthogonality
    from .grid import VectorField, face_average, vnorm

    cfg = _load_config(args)
    s = snap.read(args.snapshot)
    pot, prof = _potential_and_profile(cfg, s.grid)
    rf = face_average(s.grid, s.rho - prof.rho_s)
    v = VectorField(s.grid, rf.u1 * pot.gradf.u1, rf.u2 * pot.gradf.u2)
    w, q, gq = helmholtz_decompose(v)
    nv = vnorm(v)
    rec = vnorm(v - w - gq)
    print(f"|v|={nv:.6e} |w|={vnorm(w):.6e} |grad q|={vnorm(gq):.6e}")
    print(f"reconstruction={rec:.3e} orthogonality={orthogonality(w, gq):.3e}")
    if args.out:
        snap.write(args.out, snap.Snapshot(s.grid, s.t, s.rho, w.u1, w.u2, q))
    return 0


def cmd_verify_hydrostatic(args):
    from . import snapshot as snap
    from .equilibrium import verify_hydrostatic
    from .grid import Grid, VectorField

    cfg = _load_config(args)
    if args.snapshot:
        s = snap.read(args.snapshot)
        grid = s.grid
        pot, prof = _potential_and_profile(cfg, grid)
        u, rho, P = s.velocity(cfg["physics"]["bc"]), s.rho, s.P
    else:
        gc = cfg["grid"]
        grid = Grid(gc["nx"], gc["nz"], gc["Lx"], gc["h"])
        pot, prof = _potential_and_profile(cfg, grid)
        u, rho, P = VectorField.zeros(grid, cfg["physics"]["bc"]), prof.rho_s, prof.p_s
    res = verify_hydrostatic(pot, u, rho, P, cfg["physics"]["nu"], args.tol)
    print(f"velocity_norm={res['velocity_norm']:.3e} balance_residual={res['balance_residual']:.3e}")
    print("equilibrium" if res["is_equilibrium"] else "not an equilibrium")
    return 0 if res["is_equilibrium"] else 1


def cmd_bihari_check(args):
    import numpy as np

    from . import bihari as bh

    failures = 0
    if args.csv:
        cols = {}
        data = np.genfromtxt(args.csv, delimiter=",", names=True)
        for name in ("t", "y", "g"):
            if name not in data.dtype.names:
                print(f"missing column {name!r}", file=sys.stderr)
                return 2
            cols[name] = np.asarray(data[name], dtype=float)
        spec = bh.BihariSpec(args.a, args.u0 or args.a, args.w, cols["t"], cols["g"])
        bound = bh.bihari_bound(spec)
        worst = float(np.max(cols["y"] / bound))
        print(f"max y/bound = {worst:.6f}")
        return 0 if worst <= 1 + 1e-9 else 1
    rng = np.random.default_rng(args.seed)
    for i in range(args.random):
        spec, gfun, name = bh.random_spec(rng, n=args.samples)
        bound = bh.bihari_bound(spec)
        y = bh.ode_oracle(spec.a, spec.w, gfun, spec.t)
        ratio = float(np.max(y / bound))
        ok = ratio <= 1 + 1e-6
        failures += not ok
        print(f"spec {i:3d} w={name:<13s} max y/bound={ratio:.9f} {'ok' if ok else 'VIOLATION'}")
    print(f"{args.random - failures}/{args.random} specs bounded")
    return 0 if failures == 0 else 1


def build_parser():
    p = argparse.ArgumentParser(prog="iins", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def config_args(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--scenario", help="rest, stable-relax, rt-unstable or linear-converge")
        g.add_argument("--config", help="configuration file")
        sp.add_argument("--set", action="append", metavar="SEC.KEY=VALUE", help="override one key")

    sp = sub.add_parser("run", help="run a scenario or configuration and report")
    config_args(sp)
    sp.add_argument("--outdir")
    sp.add_argument("--restart", help="continue from a snapshot file")
    sp.add_argument("--max-steps", type=int)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("report", help="re-evaluate a run directory")
    sp.add_argument("outdir")
    sp.add_argument("--no-write", action="store_true", help="print only, keep report.txt")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("linstab", help="dispersion scan of the configured profile")
    config_args(sp)
    sp.add_argument("--nz", type=int, help="vertical resolution (default: grid nz)")
    sp.add_argument("--kmax", type=int, default=12, help="scan k = 2 pi j / Lx, j = 1..kmax")
    sp.add_argument("--k", type=float, nargs="+", help="explicit wavenumbers")
    sp.add_argument("--out", help="CSV output path")
    sp.set_defaults(func=cmd_linstab)

    sp = sub.add_parser("decompose", help="Helmholtz split of a snapshot's varrho grad f")
    config_args(sp)
    sp.add_argument("snapshot")
    sp.add_argument("--out", help="write w (velocity slots) and q (pressure slot) as a snapshot")
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("verify-hydrostatic", help="check a snapshot (or the configured profile) is at rest in balance")
    config_args(sp)
    sp.add_argument("snapshot", nargs="?")
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.set_defaults(func=cmd_verify_hydrostatic)

    sp = sub.add_parser("bihari-check", help="Bihari bound against ODE oracles or sampled data")
    sp.add_argument("--random", type=int, default=10, help="number of random specs")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--samples", type=int, default=401)
    sp.add_argument("--csv", help="CSV with columns t, y, g to test against the bound")
    sp.add_argument("--a", type=float, default=1.0)
    sp.add_argument("--u0", type=float)
    sp.add_argument("--w", default="linear", help="builtin nonlinearity name")
    sp.set_defaults(func=cmd_bihari_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    from .config import ConfigError
    from .scenarios import ScenarioError

    try:
        return args.func(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
