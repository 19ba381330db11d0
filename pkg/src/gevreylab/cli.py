"""Command line entry point.

    gevreylab params --rpq 2,3,5
    gevreylab fit --rpq 2,3,5 --mode unit --k 50:200
    gevreylab verify-all --rpq 2,3,5 --fast

Each subcommand writes CSV/JSON under --out (default ./results) with the
resolved configuration embedded, and prints a short summary.  Options may
also come from an INI file (--config) with a [common] section and one section
per subcommand; command-line flags win.  Exit codes: 0 ok, 1 a checked
threshold failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import acceptance, brackets, construct, doublewell, iterbound, rootsolve, spectral
from ._io import dumps, write_csv, write_json
from .params import ParameterError, ParameterSet, parse_triple

log = logging.getLogger("gevreylab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument types


def float_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(s) for s in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}")
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError(f"range must satisfy 0 < lo < hi, got {text!r}")
    return lo, hi


def int_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(s) for s in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi integers, got {text!r}")
    if not 0 <= lo < hi:
        raise argparse.ArgumentTypeError(f"range must satisfy 0 <= lo < hi, got {text!r}")
    return lo, hi


def int_list(text: str) -> list[int]:
    try:
        out = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not out or any(v < 0 for v in out):
        raise argparse.ArgumentTypeError("need at least one nonnegative integer")
    return out


def triple(text: str) -> ParameterSet:
    try:
        return parse_triple(text)
    except ParameterError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def terms(text: str) -> dict[int, float]:
    """'2:1,4:-0.5' -> {2: 1.0, 4: -0.5}."""
    out = {}
    try:
        for part in text.split(","):
            e, c = part.split(":")
            out[int(e)] = float(c)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected exp:coef pairs, got {text!r}")
    return out


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--rpq", type=triple, default=ParameterSet(2, 3, 5),
                        help="integer triple r,p,q with 1<r<p<q (default 2,3,5)")
    common.add_argument("--config", type=Path, help="INI file with [common] and per-command sections")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1, help="threads for independent grid points")
    common.add_argument("--fast", action="store_true", help="coarser grids (about 4x fewer points)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gevreylab", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("params", parents=[common], help="derived exponents and constants")

    s = sub.add_parser("spectrum", parents=[common], help="lowest eigenvalues of -mu^2 d^2 + V")
    s.add_argument("--potential", default="well",
                   help="'well' for the double well of --rpq, or exp:coef pairs like 2:1")
    s.add_argument("--mu", type=float, default=1.0)
    s.add_argument("--levels", type=int, default=5)
    s.add_argument("--n", type=int, default=4001, help="grid points (odd)")
    s.add_argument("--extrapolate", action="store_true", help="Richardson-extrapolated energies")

    s = sub.add_parser("branch", parents=[common], help="double-well eigenbranch E(hbar) table")
    s.add_argument("--index", type=int, default=0)
    s.add_argument("--hbar", type=float_range, default=(1e-3, 1e-1))
    s.add_argument("--per-decade", type=int, default=10)

    for name, helptext in (("roots", "root curve z2(h) of the secular equation"),
                           ("moments", "moment table log M_k"),
                           ("fit", "Gevrey order fitted to the moments"),
                           ("residual", "certify P1 A(u) = 0 (residual chain and spot check)")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--anh-index", type=int, default=0, help="anharmonic eigenbranch for lambda")
        s.add_argument("--well-index", type=int, default=0,
                       help="double-well branch (odd: moments of A(d_x2 u))")
        s.add_argument("--h-max", type=float, default=None,
                       help="top of the h grid (default: largest valid bracket)")
        s.add_argument("--per-decade", type=int, default=40, help="branch-table density")
        if name in ("moments", "fit"):
            s.add_argument("--mode", choices=(construct.UNIT, construct.FULL), default=construct.FULL)
            s.add_argument("--k", type=int_range, default=(50, 200) if name == "fit" else (0, 200))
            s.add_argument("--lower", type=float, default=0.0, help="lower limit in unit mode")
        if name == "residual":
            s.add_argument("--samples", type=int, default=20)
            s.add_argument("--rho", type=float, default=1e4)
            s.add_argument("--perturb", type=float, default=0.01, help="relative z2 perturbation")
            s.add_argument("--spot-points", type=int, default=5)

    s = sub.add_parser("tunneling", parents=[common], help="amplitude decay and doublet splitting")
    s.add_argument("--hbar", type=float_range, default=(3e-3, 3e-2))
    s.add_argument("--split-hbar", type=float_range, default=(0.03, 0.1))
    s.add_argument("--per-decade", type=int, default=10)

    s = sub.add_parser("strata", parents=[common], help="bracket depth and symplectic rank")
    s.add_argument("--fields", type=Path, help="text file, one symbol per line")
    s.add_argument("--point", help="8 comma-separated rationals (with --fields)")

    s = sub.add_parser("iterbound", parents=[common], help="maximum of the iteration objective")
    s.add_argument("--N", type=int_list, default=[20, 40, 80, 160])
    s.add_argument("--weight5", type=int, default=1)

    s = sub.add_parser("verify-all", parents=[common], help="run every acceptance check")
    s.add_argument("--only", type=int_list, help="comma-separated check ids")
    return p


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for act in parser._actions:
        if isinstance(act, argparse._SubParsersAction):
            return act.choices[name]
    raise KeyError(name)


def apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse, then re-parse with [common] + [<command>] values as defaults."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys are flag names, case matters (N)
    if not cp.read(args.config):
        raise UsageError(f"--config: cannot read {args.config}")
    sp = _subparser(parser, args.command)
    actions = {a.dest: a for a in sp._actions}
    values = {}
    for section in ("common", args.command):
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            dest = key.replace("-", "_")
            act = actions.get(dest)
            if act is None or dest in ("config", "help"):
                raise UsageError(f"--config: unknown key {key!r} in [{section}]")
            if isinstance(act, argparse._StoreTrueAction):
                values[dest] = cp.getboolean(section, key)
            elif act.type is not None:
                try:
                    values[dest] = act.type(raw)
                except (argparse.ArgumentTypeError, ValueError) as exc:
                    raise UsageError(f"--config: bad value for {key!r}: {exc}")
            else:
                values[dest] = raw
    sp.set_defaults(**values)
    return parser.parse_args(argv)


def resolved(args: argparse.Namespace) -> dict:
    out = {}
    for k, v in vars(args).items():
        if isinstance(v, ParameterSet):
            v = list(v.triple)
        elif isinstance(v, Path):
            v = str(v)
        out[k] = v
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_params(args, cfg) -> int:
    ps = args.rpq
    d = ps.to_dict()
    path = write_json(args.out / "params.json", {"params": d}, cfg)
    print(dumps(d))
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_spectrum(args, cfg) -> int:
    ps = args.rpq
    if args.potential == "well":
        pot = doublewell.well_potential(ps)
    else:
        try:
            pot = spectral.Potential.from_terms(terms(args.potential))
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"--potential: {exc}")
    grid = spectral.auto_grid(pot, args.mu, args.levels, n=args.n)
    pairs = spectral.solve(pot, args.mu, grid, args.levels, extrapolate=args.extrapolate)
    rows = [(p.index, p.energy, p.grid_energy, p.parity, spectral.eigen_residual(pot, p),
             ";".join(p.flags)) for p in pairs]
    write_csv(args.out / "spectrum.csv", ("index", "energy", "grid_energy", "parity", "residual", "flags"),
              rows, cfg)
    for r in rows:
        print(f"{r[0]:3d}  {r[1]:.12g}  {r[3]}")
    return EXIT_OK


def cmd_branch(args, cfg) -> int:
    ps = args.rpq
    per = max(2, args.per_decade // (4 if args.fast else 1))
    bt = doublewell.branch(ps, args.index, doublewell.geometric_grid(*args.hbar, per),
                           workers=args.workers)
    write_csv(args.out / f"branch_{args.index}.csv", doublewell.BRANCH_COLUMNS, bt.to_rows(), cfg)
    lo = bt.sorted().rows[0]
    print(f"{len(bt.rows)} rows; E/hbar at hbar={lo.hbar:.3g}: {lo.energy / lo.hbar:.6g} "
          f"(harmonic limit {(2 * (args.index // 2) + 1) * ps.e_star:.6g})")
    return EXIT_OK


def _construction(args) -> construct.Construction:
    per = max(5, args.per_decade // (4 if args.fast else 1))
    return construct.build(args.rpq, args.anh_index, args.well_index, h_max=args.h_max,
                           per_decade=per, workers=args.workers)


def cmd_roots(args, cfg) -> int:
    c = _construction(args)
    cv = c.curve
    write_csv(args.out / "roots.csv", ("h", "z2", "residual", "hbar"), cv.to_rows(), cfg)
    meta = cv.metadata()
    meta["uniqueness_sign_changes"] = rootsolve.uniqueness_witness(args.rpq, c.lam, c.energy, cv.h[::6])
    write_json(args.out / "roots.json", meta, cfg)
    zt = cv.z_tilde
    ok = bool(np.all((cv.z2 >= zt / 2) & (cv.z2 <= 1.5 * zt)) and cv.residual.max() <= 1e-10)
    print(f"lambda={c.lam:.10g} z~={zt:.8g} h0={cv.h0:.4g} M_u={c.Mu:.6g} "
          f"max residual={cv.residual.max():.2e}")
    return EXIT_OK if ok else EXIT_FAIL


def _moments(args):
    k_lo, k_hi = args.k
    if args.mode == construct.UNIT:
        mt = construct.unit_moments(float(args.rpq.theta), range(0, k_hi + 1), lower=args.lower)
        meta = {"theta": mt.theta, "lower": mt.lower}
    else:
        c = _construction(args)
        mt = c.moments(k_hi)
        meta = mt.meta
    return mt, meta


def cmd_moments(args, cfg) -> int:
    mt, meta = _moments(args)
    sel = mt.k >= args.k[0]
    rows = [r for r, s in zip(mt.to_rows(), sel) if s]
    write_csv(args.out / f"moments_{args.mode}.csv", ("k", "log_M", "quad_error"), rows, cfg)
    write_json(args.out / f"moments_{args.mode}.json",
               {"meta": meta, "convexity_violations": mt.convexity_violations()}, cfg)
    print(f"{len(rows)} moments; log M_{mt.k[-1]} = {mt.log_M[-1]:.10g}")
    return EXIT_OK


def cmd_fit(args, cfg) -> int:
    mt, meta = _moments(args)
    try:
        fit = construct.fit_gevrey(mt, *args.k)
    except construct.FitError as exc:
        raise UsageError(f"--k: {exc}")
    s0 = float(args.rpq.s0)
    rep = {"fit": fit.to_dict(), "s0": s0, "relative_to_s0": fit.s / s0 - 1, "meta": meta}
    write_json(args.out / f"fit_{args.mode}.json", rep, cfg)
    print(f"s = {fit.s:.6f}  (s0 = {s0:.6f}, relative {fit.s / s0 - 1:+.3%})")
    return EXIT_OK


def cmd_residual(args, cfg) -> int:
    c = _construction(args)
    rng = np.random.default_rng(args.seed)
    samples = construct.random_samples(rng, args.samples, rho=args.rho)
    base = construct.residual_chain(c, samples)
    pert = construct.residual_chain(c, samples, z_perturbation=args.perturb)
    pts = np.vstack([np.zeros(4), rng.uniform(-0.01, 0.01, (max(args.spot_points - 1, 0), 4))])
    spot = construct.spot_check_pde(c, pts)
    rep = {"chain": base.to_dict(), "perturbed": pert.to_dict(), "spot": spot.to_dict(),
           "meta": c.metadata()}
    write_json(args.out / "residual.json", rep, cfg)
    jump = pert.max_normalized / max(base.max_normalized, 1e-300)
    print(f"chain max {base.max_normalized:.2e}, perturbed {pert.max_normalized:.2e} "
          f"(x{jump:.2e}); spot max {spot.max_relative:.2e}")
    ok = base.max_normalized <= 1e-6 and spot.max_relative <= 1e-3
    return EXIT_OK if ok else EXIT_FAIL


def cmd_tunneling(args, cfg) -> int:
    ps = args.rpq
    per = max(3, args.per_decade // (2 if args.fast else 1))
    results = {}
    for idx in (0, 1):
        bt = doublewell.branch(ps, idx, doublewell.geometric_grid(*args.hbar, per), workers=args.workers)
        results[bt.parity] = doublewell.tunneling_fit(bt).to_dict()
        write_csv(args.out / f"tunneling_{bt.parity}.csv", doublewell.BRANCH_COLUMNS, bt.to_rows(), cfg)
    split = doublewell.splitting_fit(ps, doublewell.geometric_grid(*args.split_hbar, 12))
    results["splitting"] = split.to_dict()
    write_json(args.out / "tunneling.json", results, cfg)
    ev = results["even"]
    print(f"S_well={ev['s_well']:.8f} s_fit(even)={ev['s_fit']:.6f} s_fit(odd)={results['odd']['s_fit']:.6f} "
          f"split slope={split.slope:.6f} (target {-2 * split.s_well:.6f})")
    return EXIT_OK


def _parse_point(text: str):
    from fractions import Fraction

    try:
        pt = [Fraction(s.strip()) for s in text.split(",")]
    except ValueError:
        raise UsageError(f"--point: cannot parse {text!r}")
    if len(pt) != 8:
        raise UsageError("--point needs 8 coordinates x1..x4, xi1..xi4")
    return pt


def cmd_strata(args, cfg) -> int:
    r, p, q = args.rpq.triple
    if args.fields:
        if not args.point:
            raise UsageError("--fields requires --point")
        fields = brackets.parse_fields(args.fields.read_text())
        try:
            rep = brackets.depth_at(fields, _parse_point(args.point))
        except brackets.NotCharacteristicError as exc:
            raise UsageError(f"--point: {exc}")
        reports = [rep.to_dict()]
        ok = True
    else:
        reports, ok = [], True
        for st in brackets.strata():
            rep = brackets.check_stratum(st, r, p, q)
            d = rep.to_dict()
            d["expected_depth"] = brackets.expected_depth(st, r, p)
            d["expected_rank"] = st.rank
            ok &= d["depth"] == d["expected_depth"] and d["symplectic_rank"] == st.rank
            reports.append(d)
    write_json(args.out / "strata.json", {"strata": reports}, cfg)
    for d in reports:
        print(f"{d['name'] or 'point'}: depth {d['depth']} rank {d['symplectic_rank']} witness {d['witness']}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_iterbound(args, cfg) -> int:
    ps = args.rpq
    rows, wit = [], []
    for N in args.N:
        m, w = iterbound.brute_max(ps, N, weight5=args.weight5)
        lp = float(iterbound.lp_bound(ps, N))
        rows.append((N, m, m / N if N else math.nan, lp))
        wit.append(w.to_dict())
    write_csv(args.out / "iterbound.csv", ("N", "max", "max_over_N", "lp_bound"), rows, cfg)
    write_json(args.out / "iterbound.json", {"s0": float(ps.s0), "witnesses": wit}, cfg)
    for r in rows:
        print(f"N={r[0]:4d} max={r[1]:5d} max/N={r[2]:.5f} lp={r[3]:.4f}")
    ok = all(r[1] <= r[3] for r in rows)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify_all(args, cfg) -> int:
    checks = acceptance.run_all(args.rpq, fast=args.fast, seed=args.seed, workers=args.workers,
                                only=set(args.only) if args.only else None, echo=print)
    write_json(args.out / "verify_all.json", {"checks": [c.to_dict() for c in checks]}, cfg)
    failed = [c.id for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} passed" + (f"; failed: {failed}" if failed else ""))
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {
    "params": cmd_params, "spectrum": cmd_spectrum, "branch": cmd_branch, "roots": cmd_roots,
    "moments": cmd_moments, "fit": cmd_fit, "residual": cmd_residual, "tunneling": cmd_tunneling,
    "strata": cmd_strata, "iterbound": cmd_iterbound, "verify-all": cmd_verify_all,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = apply_config(parser, argv)
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse: --help or a bad flag
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = resolved(args)
    try:
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParameterError, ValueError, OSError) as exc:
        print(f"error in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (rootsolve.BracketError, rootsolve.CoverageError, spectral.SpectralError,
            doublewell.FitError, construct.StepSelectionError, brackets.DepthCapError) as exc:
        print(f"error in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
