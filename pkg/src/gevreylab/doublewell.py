"""The symmetric double well W(x) = x^{2(q-1)} - x^{2(p-1)} - gamma_hat.

Eigenbranches E(hbar), the tunnelling amplitude at the barrier top x = 0, and
the Agmon-distance oracle for its decay.  Amplitudes are carried as
(sign, log-magnitude): at hbar ~ 1e-3 the value u(0, hbar) is far below the
smallest double.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import bisect

from .params import ParameterSet
from .spectral import (
    EVEN,
    ODD,
    SPLITTING_FLAG,
    EigenPair,
    Potential,
    SpectralGrid,
    auto_grid,
    kinetic_norm2,
    resolution,
    sector_levels,
    solve_level,
)

DEFAULT_POINTS_PER_SQRT = 50


class FitError(RuntimeError):
    pass


def well_potential(ps: ParameterSet) -> Potential:
    return Potential.from_terms(ps.well_terms(), offset=-ps.gamma_hat)


def well_grid(ps: ParameterSet, hbar: float, n: int = 0,
              points_per_sqrt: float = DEFAULT_POINTS_PER_SQRT) -> SpectralGrid:
    """Grid with spacing sqrt(hbar) / points_per_sqrt.

    A spacing proportional to the oscillator length keeps the relative
    discretisation error of E(hbar) constant, hence smooth along a branch.
    """
    return auto_grid(well_potential(ps), hbar, n + 1, dx=math.sqrt(hbar) / points_per_sqrt)


def x0_of(ps: ParameterSet, energy: float) -> float:
    """First positive zero of W - E (inner turning point)."""
    if not 0 < energy < -ps.gamma_hat:
        raise ValueError("energy must lie strictly between the well bottom and barrier top")
    return bisect(lambda x: ps.W(x) - energy, 0.0, ps.x_star, xtol=1e-15)


def origin_log_amplitude(pot: Potential, pair: EigenPair, x_match: float):
    """(sign, log|u(0)|) for even pairs, (sign, log|u'(0)|) for odd ones.

    The discrete eigen-recurrence is run outward from the origin with unit
    data there.  Through the barrier that solution is the growing one, so the
    recurrence is stable; it is rescaled as it goes and the log scale is kept.
    Matching against the eigenvector at ``x_match`` (a node where the vector is
    large) fixes the amplitude at 0 without ever forming the tiny number.
    Returns also whether the recurrence stayed positive up to the match node.
    """
    grid = pair.grid
    dx = grid.dx
    a = pair.mu**2 / dx**2
    m = int(round(x_match / dx))
    m = min(max(m, 2), grid.half - 1)
    xh = np.arange(m + 1) * dx
    c = 2 + (pot(xh) - pair.grid_energy) / a
    log_scale = 0.0
    positive = True
    if pair.parity == EVEN:
        prev, cur = 1.0, 1.0 + (c[0] - 2) / 2
    else:
        prev, cur = 0.0, dx
    positive &= cur > 0
    for i in range(1, m):
        prev, cur = cur, c[i] * cur - prev
        positive &= cur > 0
        big = abs(cur)
        if big > 1e150:
            prev /= big
            cur /= big
            log_scale += math.log(big)
    ref = pair.half[m]
    sign = math.copysign(1.0, ref) * math.copysign(1.0, cur)
    log_amp = math.log(abs(ref)) - (math.log(abs(cur)) + log_scale)
    return sign, log_amp, bool(positive)


@dataclass
class BranchRow:
    hbar: float
    energy: float
    u0: float
    du0: float
    parity: str
    log_amp: float
    sign: float
    x0: float
    n_grid: int
    positive_barrier: bool
    flags: tuple[str, ...] = ()

    def as_tuple(self):
        return (self.hbar, self.energy, self.u0, self.du0, self.parity, self.log_amp,
                self.sign, self.x0, self.n_grid, int(self.positive_barrier), ";".join(self.flags))


BRANCH_COLUMNS = ("hbar", "E", "u0", "du0", "parity", "log_amp", "sign", "x0", "n_grid",
                  "positive_barrier", "flags")


@dataclass
class BranchTable:
    ps: ParameterSet
    n: int
    rows: list[BranchRow]
    points_per_sqrt: float = DEFAULT_POINTS_PER_SQRT

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def hbar(self) -> np.ndarray:
        return self.column("hbar")

    @property
    def energy(self) -> np.ndarray:
        return self.column("energy")

    @property
    def log_amp(self) -> np.ndarray:
        return self.column("log_amp")

    @property
    def parity(self) -> str:
        return EVEN if self.n % 2 == 0 else ODD

    def sorted(self) -> "BranchTable":
        return BranchTable(self.ps, self.n, sorted(self.rows, key=lambda r: r.hbar),
                           self.points_per_sqrt)

    def to_rows(self):
        return [r.as_tuple() for r in self.rows]


def branch_row(ps: ParameterSet, n: int, hbar: float,
               points_per_sqrt: float = DEFAULT_POINTS_PER_SQRT) -> tuple[BranchRow, EigenPair]:
    pot = well_potential(ps)
    grid = well_grid(ps, hbar, n, points_per_sqrt)
    pair = solve_level(pot, hbar, grid, n)
    flags: tuple[str, ...] = ()
    # partner of the tunnelling doublet (0<->1, 2<->3, ...)
    partner = solve_level(pot, hbar, grid, n ^ 1)
    if abs(partner.grid_energy - pair.grid_energy) <= resolution(hbar, grid, pair.grid_energy):
        flags = (SPLITTING_FLAG,)
    E = pair.grid_energy
    x0 = x0_of(ps, E) if E < -ps.gamma_hat else 0.0
    match = x0 if x0 > 0 else ps.x_star
    sign, log_amp, positive = origin_log_amplitude(pot, pair, match)
    amp = sign * math.exp(log_amp) if log_amp > -745 else 0.0
    u0, du0 = (amp, 0.0) if pair.parity == EVEN else (0.0, amp)
    row = BranchRow(hbar, E, u0, du0, pair.parity, log_amp, sign, x0, grid.n, positive, flags)
    return row, pair


def branch(ps: ParameterSet, n: int, hbar_grid: Sequence[float], *,
           points_per_sqrt: float = DEFAULT_POINTS_PER_SQRT, workers: int = 1) -> BranchTable:
    """Eigenbranch n of -hbar^2 d^2 + W on the given hbar values."""
    hb = [float(h) for h in hbar_grid]
    if any(h <= 0 for h in hb):
        raise ValueError("hbar values must be positive")
    job = lambda h: branch_row(ps, n, h, points_per_sqrt)[0]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(job, hb))
    else:
        rows = [job(h) for h in hb]
    return BranchTable(ps, n, rows, points_per_sqrt)


def geometric_grid(lo: float, hi: float, per_decade: int) -> np.ndarray:
    count = max(2, int(math.ceil(per_decade * math.log10(hi / lo))) + 1)
    return np.geomspace(lo, hi, count)


# ---------------------------------------------------------------------------
# derivative of E along the branch


def dE_dmu(target, n: int, mu: float, grid: SpectralGrid | None = None) -> float:
    """2 mu ||v'||^2 for eigenpair n (exact derivative of the grid eigenvalue).

    ``target`` is a ParameterSet (double well) or any Potential.
    """
    pot = well_potential(target) if isinstance(target, ParameterSet) else target
    if grid is None:
        grid = auto_grid(pot, mu, n + 1, dx=math.sqrt(mu) / DEFAULT_POINTS_PER_SQRT)
    pair = solve_level(pot, mu, grid, n)
    return 2 * mu * kinetic_norm2(pair)


def dE_dmu_fd(target, n: int, mu: float, grid: SpectralGrid | None = None,
              rel_step: float = 0.01) -> float:
    """Centred difference of E(mu) on one fixed grid (oracle for :func:`dE_dmu`)."""
    pot = well_potential(target) if isinstance(target, ParameterSet) else target
    if grid is None:
        grid = auto_grid(pot, mu, n + 1, dx=math.sqrt(mu) / DEFAULT_POINTS_PER_SQRT)
    hi = solve_level(pot, mu * (1 + rel_step), grid, n).grid_energy
    lo = solve_level(pot, mu * (1 - rel_step), grid, n).grid_energy
    return (hi - lo) / (2 * rel_step * mu)


# ---------------------------------------------------------------------------
# Agmon distance and tunnelling fits


@dataclass
class AgmonReport:
    s_well: float
    barrier_rate: float
    barrier_bound: float
    s_fit: float | None = None
    intercept: float | None = None
    all_positive: bool | None = None
    hbar_range: tuple[float, float] | None = None
    parity: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def agmon(ps: ParameterSet) -> AgmonReport:
    """Agmon distance from the barrier top to a well bottom, int_0^x* sqrt(W)."""
    val, _ = quad(lambda x: math.sqrt(max(ps.W(x), 0.0)), 0.0, ps.x_star,
                  epsabs=1e-14, epsrel=1e-13, limit=200)
    rate = math.sqrt(-ps.gamma_hat)
    return AgmonReport(val, rate, rate * ps.x_star)


def tunneling_fit(bt: BranchTable) -> AgmonReport:
    """Fit log|amplitude at 0| = c - s_fit / hbar over the table."""
    if len(bt.rows) < 5:
        raise FitError("need at least 5 rows")
    hb = bt.hbar
    if hb.max() / hb.min() < 10 * (1 - 1e-9):
        raise FitError("hbar rows must span at least one decade")
    la = bt.log_amp
    if not np.all(np.isfinite(la)):
        raise FitError("amplitude underflow: non-finite log amplitudes")
    slope, icpt = np.polyfit(1 / hb, la, 1)
    rep = agmon(bt.ps)
    rep.s_fit = float(-slope)
    rep.intercept = float(icpt)
    rep.all_positive = bool(np.all(bt.column("sign") > 0) and np.all(bt.column("positive_barrier")))
    rep.hbar_range = (float(hb.min()), float(hb.max()))
    rep.parity = bt.parity
    return rep


@dataclass
class SplittingReport:
    hbar: np.ndarray
    splitting: np.ndarray
    resolved: np.ndarray
    slope: float
    intercept: float
    s_well: float

    def to_dict(self) -> dict:
        return {"hbar": self.hbar.tolist(), "splitting": self.splitting.tolist(),
                "resolved": self.resolved.tolist(), "slope": self.slope,
                "intercept": self.intercept, "s_well": self.s_well,
                "target_slope": -2 * self.s_well}


def splitting_fit(ps: ParameterSet, hbar_grid: Sequence[float], doublet: int = 0,
                  points_per_sqrt: float = DEFAULT_POINTS_PER_SQRT) -> SplittingReport:
    """log(E_odd - E_even) against 1/hbar for the doublet (2*doublet, 2*doublet+1)."""
    pot = well_potential(ps)
    hb = np.asarray(hbar_grid, dtype=float)
    split = np.empty(hb.size)
    ok = np.empty(hb.size, dtype=bool)
    for i, h in enumerate(hb):
        grid = auto_grid(pot, h, 2 * doublet + 2, dx=math.sqrt(h) / points_per_sqrt)
        ev = sector_levels(pot, h, grid, EVEN, doublet + 1, vectors=False)[0][doublet]
        od = sector_levels(pot, h, grid, ODD, doublet + 1, vectors=False)[0][doublet]
        split[i] = od - ev
        ok[i] = split[i] > resolution(h, grid, ev)
    if ok.sum() < 4:
        raise FitError("fewer than 4 resolved splittings; move the grid to larger hbar")
    slope, icpt = np.polyfit(1 / hb[ok], np.log(split[ok]), 1)
    return SplittingReport(hb, split, ok, float(slope), float(icpt), agmon(ps).s_well)
