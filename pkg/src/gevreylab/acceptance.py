"""End-to-end checks with their pass thresholds, one function per criterion.

Each check returns a :class:`Check`; :func:`run_all` runs them in order.  The
``fast`` profile shrinks grids for quick smoke runs and is not meant to meet
every threshold with margin.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import brackets, construct, doublewell, iterbound, rootsolve, spectral
from .params import DEFAULT_MATRIX, ParameterSet


@dataclass
class Check:
    id: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        brief = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items() if not isinstance(v, (list, dict)))
        return f"[{tag}] {self.id:2d} {self.name}: {brief} ({self.seconds:.1f}s)"

    def to_dict(self) -> dict:
        return {"id": self.id, "name": self.name, "passed": self.passed,
                "seconds": self.seconds, "measured": _jsonable(self.measured)}


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, Fraction):
        return str(v)
    return v


def _timed(fn: Callable[[], tuple[bool, dict]], cid: int, name: str) -> Check:
    t0 = time.perf_counter()
    ok, measured = fn()
    return Check(cid, name, bool(ok), measured, time.perf_counter() - t0)


class Context:
    """Shared, lazily built objects (the constructions are the expensive part)."""

    def __init__(self, ps: ParameterSet, fast: bool = False, seed: int = 0, workers: int = 1):
        self.ps = ps
        self.fast = fast
        self.seed = seed
        self.workers = workers
        self._cache: dict = {}

    @property
    def per_decade(self) -> int:
        return 10 if self.fast else 40

    def construction(self, anh_index: int = 0, well_index: int = 0) -> construct.Construction:
        key = ("c", anh_index, well_index)
        if key not in self._cache:
            self._cache[key] = construct.build(self.ps, anh_index, well_index,
                                               per_decade=self.per_decade, workers=self.workers)
        return self._cache[key]


# ---------------------------------------------------------------------------


def harmonic_calibration(ctx: Context) -> Check:
    def run():
        pot = spectral.Potential.from_terms({2: 1.0})
        t0 = time.perf_counter()
        pairs = spectral.solve(pot, 1.0, spectral.auto_grid(pot, 1.0, 5, n=4001), 5, extrapolate=True)
        dt = time.perf_counter() - t0
        err = max(abs(p.energy - (2 * k + 1)) for k, p in enumerate(pairs))
        return err <= 1e-8 and dt <= 5.0, {"max_error": err, "solve_seconds": dt,
                                           "L": pairs[0].grid.half_width}
    return _timed(run, 1, "harmonic calibration")


def semiclassical_limit(ctx: Context) -> Check:
    def run():
        ps = ctx.ps
        row, _ = doublewell.branch_row(ps, 0, 1e-3)
        ratio = row.energy / 1e-3
        rel = abs(ratio / ps.e_star - 1)
        lam = construct.anharmonic(ps.r, 0).lam
        t0 = time.perf_counter()
        rootsolve.build_energy(ps, lam, per_decade=ctx.per_decade, workers=ctx.workers)
        dt = time.perf_counter() - t0
        return rel <= 0.02 and dt <= 60.0, {"E_over_hbar": ratio, "e_star": ps.e_star,
                                            "relative": rel, "table_seconds": dt}
    return _timed(run, 2, "semiclassical limit")


def root_curve(ctx: Context) -> Check:
    def run():
        c = ctx.construction()
        cv = c.curve
        zt = cv.z_tilde
        in_range = bool(np.all((cv.z2 >= zt / 2) & (cv.z2 <= 1.5 * zt)))
        z_small = float(cv.z_of_h(1e-4)[0])
        dev = abs(z_small - zt)
        res = float(cv.residual.max())
        ansatz = bool(np.all(cv.ansatz_margin() > 0))
        ok = in_range and dev <= 1e-3 and res <= 1e-10 and ansatz
        if ctx.ps.triple == (2, 3, 5) and abs(c.lam - 1) < 1e-6:
            ok = ok and abs(z_small - math.sqrt(2)) <= 1e-3
        return ok, {"h0": cv.h0, "z_tilde": zt, "z2_at_1e-4": z_small, "deviation": dev,
                    "max_residual": res, "in_range": in_range, "M_u": c.Mu}
    return _timed(run, 3, "root curve")


def gevrey_calibration(ctx: Context) -> Check:
    def run():
        theta = float(ctx.ps.theta)
        mt = construct.unit_moments(theta, range(0, 201))
        exact = np.array([construct.gamma_moment(k, theta) for k in mt.k])
        qerr = float(np.max(np.abs(np.expm1(mt.log_M - exact))))
        fit = construct.fit_gevrey(mt, 50, 200)
        rel = abs(fit.s * theta - 1)
        return rel <= 0.01 and qerr <= 1e-8, {"s": fit.s, "target": 1 / theta, "relative": rel,
                                               "quadrature_rel_error": qerr}
    return _timed(run, 4, "Gevrey calibration (unit)")


def gevrey_full(ctx: Context) -> Check:
    def run():
        s0 = float(ctx.ps.s0)
        k_max = 200
        ground = ctx.construction(0)
        excited = ctx.construction(1)
        f0 = construct.fit_gevrey(ground.moments(k_max), 50, 200)
        f1 = construct.fit_gevrey(excited.moments(k_max), 50, 200)
        r0 = abs(f0.s / s0 - 1)
        r1 = abs(f1.s / s0 - 1)
        r01 = abs(f1.s / f0.s - 1)
        beta, _ = ground.amplitude_decay()
        kappa = float(ctx.ps.kappa)
        ok = r0 <= 0.03 and r1 <= 0.03 and r01 <= 0.03
        return ok, {"s_ground": f0.s, "s_excited": f1.s, "s0": s0, "rel_ground": r0,
                    "rel_excited": r1, "rel_between": r01, "lambda_excited": excited.lam,
                    "decay_beta": beta, "kappa": kappa, "decay_ok": beta <= 1.1 * kappa}
    return _timed(run, 5, "Gevrey order (full construction)")


def pde_annihilation(ctx: Context) -> Check:
    def run():
        c = ctx.construction()
        rng = np.random.default_rng(ctx.seed)
        samples = construct.random_samples(rng, 20, rho=1e4)
        base = construct.residual_chain(c, samples)
        pert = construct.residual_chain(c, samples, z_perturbation=0.01)
        jump = pert.max_normalized / max(base.max_normalized, 1e-300)
        pts = np.vstack([np.zeros(4), rng.uniform(-0.01, 0.01, (4, 4))])
        spot = construct.spot_check_pde(c, pts)
        bent = construct.spot_check_pde(c, pts[1:], theta_scale=0.9)
        theta_jump = min(b / max(a, 1e-300) for a, b in zip(spot.relative[1:], bent.relative))
        ok = base.max_normalized <= 1e-6 and jump >= 1e3 and spot.max_relative <= 1e-3
        return ok, {"chain_max": base.max_normalized, "perturbed_max": pert.max_normalized,
                    "perturbation_jump": jump, "spot_max": spot.max_relative,
                    "theta_sensitivity": theta_jump}
    return _timed(run, 6, "PDE annihilation")


def tunneling(ctx: Context) -> Check:
    def run():
        ps = ctx.ps
        hb = doublewell.geometric_grid(3e-3, 3e-2, 10)
        even = doublewell.branch(ps, 0, hb, workers=ctx.workers)
        rep = doublewell.tunneling_fit(even)
        s_ref = 0.4 * 2 ** -0.25 if ps.triple == (2, 3, 5) else rep.s_well
        c = ctx.construction()
        table_positive = all(r.sign > 0 and r.positive_barrier for r in c.table.rows)
        split = doublewell.splitting_fit(ps, doublewell.geometric_grid(0.03, 0.1, 12))
        target = -2 * rep.s_well
        split_rel = abs(split.slope / target - 1)
        ok = (rep.all_positive and table_positive and 0 < rep.s_fit <= 1.05 * rep.s_well
              and abs(rep.s_well - s_ref) <= 1e-8 and split.slope < 0 and split_rel <= 0.25)
        return ok, {"s_well": rep.s_well, "s_fit": rep.s_fit, "all_positive": rep.all_positive,
                    "construction_rows_positive": table_positive, "split_slope": split.slope,
                    "split_target": target, "split_rel": split_rel,
                    "resolved": int(split.resolved.sum())}
    return _timed(run, 7, "tunneling")


def apriori(ctx: Context) -> Check:
    def run():
        pot = doublewell.well_potential(ctx.ps)
        mus = (1.0, 0.1, 0.01)
        ratios = [spectral.verify_apriori(pot, mu, 100, seed=ctx.seed).max_ratio for mu in mus]
        growth = max(b / a for a, b in zip(ratios, ratios[1:]))
        hbars = np.geomspace(0.01, 0.1, 6)
        pairs = [doublewell.branch_row(ctx.ps, 0, h)[1] for h in hbars]
        ds = spectral.verify_derivative_scaling(pairs)
        beta_ok = bool(np.all(ds.betas <= ds.bounds + 0.15))
        return growth <= 1.1 and beta_ok, {"max_ratios": ratios, "growth": growth,
                                           "betas": ds.betas.tolist(), "beta_ok": beta_ok}
    return _timed(run, 8, "a priori bounds")


def stratification(ctx: Context) -> Check:
    def run():
        r, p, q = ctx.ps.triple
        bad = []
        for st in brackets.strata():
            rep = brackets.check_stratum(st, r, p, q)
            if rep.depth != brackets.expected_depth(st, r, p) or rep.rank != st.rank:
                bad.append(rep.name)
        rng = random.Random(ctx.seed)
        eqs = [brackets.parse_symbol(e) for e in ("x1", "x2", "xi1", "xi2")]
        f1 = brackets.fields_P1(r, p, q)
        char_bad = 0
        for _ in range(20):
            c, d = Fraction(rng.randint(-9, 9), rng.randint(1, 9)), Fraction(rng.randint(1, 9), rng.randint(1, 9))
            pt = (0, 0, Fraction(rng.randint(-9, 9), 7), Fraction(rng.randint(-9, 9), 5), 0, 0, c, d)
            rep = brackets.depth_at(f1, pt, equations=eqs)
            char_bad += rep.depth != r or rep.rank != 4
        ids = brackets.identity_violations(1000, seed=ctx.seed)
        ok = not bad and char_bad == 0 and not any(ids.values())
        return ok, {"strata_failures": bad, "char_failures": char_bad, "identity_violations": ids}
    return _timed(run, 9, "stratification")


def iteration_bound(ctx: Context) -> Check:
    def run():
        ps = ctx.ps
        s0 = float(ps.s0)
        rows = iterbound.table(ps)
        ok = all(abs(r["max"] / r["N"] - s0) <= 2 / r["N"] and r["max"] <= r["lp_bound"] for r in rows)
        extra = {}
        if ps.triple == (2, 3, 5):
            m20 = iterbound.brute_max(ps, 20)[0]
            ok = ok and m20 == 27
            extra["max_20"] = m20
        return ok, {**extra, "ratios": [r["ratio"] for r in rows]}
    return _timed(run, 10, "iteration bound")


def property_suites(ctx: Context) -> Check:
    def run():
        violations = {"log_convexity": 0, "eigen_residual": 0, "orthogonality": 0, "exponents": 0}
        for t in DEFAULT_MATRIX:
            ps = ParameterSet(*t)
            violations["exponents"] += len(exponent_identity_failures(ps))
            mt = construct.unit_moments(float(ps.theta), range(0, 120))
            violations["log_convexity"] += mt.convexity_violations()
            if not ctx.fast:
                c = construct.build(ps, per_decade=20, workers=ctx.workers)
                violations["log_convexity"] += c.moments(120).convexity_violations()
            pot = doublewell.well_potential(ps)
            pairs = spectral.solve(pot, 0.05, doublewell.well_grid(ps, 0.05, 4), 5)
            for a in pairs:
                # residual relative to the stencil's own rounding scale
                scale = 4 * a.mu**2 / a.grid.dx**2 + abs(a.grid_energy)
                violations["eigen_residual"] += spectral.eigen_residual(pot, a) > 1e-10 * scale
                for b in pairs:
                    if b.index > a.index:
                        violations["orthogonality"] += abs(spectral.inner(a, b)) > 1e-10
        return not any(violations.values()), violations
    return _timed(run, 11, "property suites")


def exponent_identity_failures(ps: ParameterSet) -> list[str]:
    """Exact identities between the exponents of the reduction chain."""
    r, p, q = ps.triple
    th, ka = ps.theta, ps.kappa
    out = []
    checks = {
        "theta_split": th - Fraction(p - 1, q) - Fraction(1, r) == (Fraction(1, q) - Fraction(1, r)) * Fraction(p - 1, q - 1),
        "kappa_is_minus_h_of_rho": ps.t_exp * ps.h_exp == -ka,
        "radicand_in_rho": 2 * (th - 1) == -ka * ps.ansatz_exp,
        "kappa_below_theta": ka < th,
        "s0_inverse": ps.s0 * th == 1,
        "minimum_of_well": abs(ps.W(ps.x_star)) <= 1e-14,
        "z_tilde_root": abs(ps.z_tilde(1.0) ** -float(ps.lambda_exp) + ps.gamma_hat) <= 1e-14,
    }
    for name, ok in checks.items():
        if not ok:
            out.append(name)
    return out


CHECKS = (harmonic_calibration, semiclassical_limit, root_curve, gevrey_calibration, gevrey_full,
          pde_annihilation, tunneling, apriori, stratification, iteration_bound, property_suites)


def run_all(ps: ParameterSet | None = None, fast: bool = False, seed: int = 0, workers: int = 1,
            only: set[int] | None = None, echo: Callable[[str], None] | None = None) -> list[Check]:
    ctx = Context(ps or ParameterSet(2, 3, 5), fast, seed, workers)
    out = []
    for i, fn in enumerate(CHECKS, start=1):
        if only and i not in only:
            continue
        try:
            chk = fn(ctx)
        except Exception as exc:  # a crashing check is a failed check
            chk = Check(i, fn.__name__, False, {"error": f"{type(exc).__name__}: {exc}"})
        out.append(chk)
        if echo:
            echo(chk.line())
    return out
