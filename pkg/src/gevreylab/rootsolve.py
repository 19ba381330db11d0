"""Secular equation f(h, z) = 0 coupling the anharmonic eigenvalue to the
double-well branch, and the curve h -> z2(h) it defines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .doublewell import BranchTable, branch, geometric_grid
from .params import ParameterSet


class AnsatzError(ValueError):
    """1 - z^2 h^a <= 0: the amplitude-frequency Ansatz is violated."""


class BracketError(RuntimeError):
    """f(h, .) does not change sign on [z~/2, 3 z~/2]."""


class CoverageError(RuntimeError):
    """A requested hbar lies outside the tabulated branch."""


class EnergyBranch:
    """E(hbar) for one branch, continuous on [0, hbar_max] with E(0) = 0.

    Inside the table the smooth ratio E/hbar is interpolated by a cubic spline
    in log hbar.  Below the first node it is joined linearly in hbar to its
    harmonic limit (2j+1) e*, j = n // 2.
    """

    def __init__(self, table: BranchTable):
        t = table.sorted()
        hb = t.hbar
        if hb.size < 4:
            raise ValueError("branch table needs at least 4 rows")
        self.table = t
        self.ps = t.ps
        self.n = t.n
        self.lo, self.hi = float(hb[0]), float(hb[-1])
        self.limit = (2 * (t.n // 2) + 1) * t.ps.e_star
        self._g = CubicSpline(np.log(hb), t.energy / hb)
        self._g_lo = float(t.energy[0] / hb[0])

    def ratio(self, hbar):
        hbar = np.asarray(hbar, dtype=float)
        if np.any(hbar > self.hi * (1 + 1e-12)) or np.any(hbar < 0):
            raise CoverageError(f"hbar outside [0, {self.hi:.4g}]")
        out = np.empty_like(hbar)
        inside = hbar >= self.lo
        out[inside] = self._g(np.log(np.minimum(hbar[inside], self.hi)))
        below = ~inside
        out[below] = self.limit + (self._g_lo - self.limit) * hbar[below] / self.lo
        return out

    def __call__(self, hbar):
        hbar = np.asarray(hbar, dtype=float)
        return hbar * self.ratio(hbar)


def radicand(h, z, ps: ParameterSet):
    return 1.0 - np.asarray(z) ** 2 * np.asarray(h) ** float(ps.ansatz_exp)


def f_eval(h, z, ps: ParameterSet, lam: float, energy):
    """f(h, z) = rad^{1/r} z^{-2(q-1)/(q-p)} lam + gamma_hat + E(h / z^{q/(q-p)})."""
    h = np.asarray(h, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("z must be positive")
    rad = radicand(h, z, ps)
    if np.any(rad <= 0):
        raise AnsatzError("1 - z^2 h^a <= 0; shrink the h or z range")
    hbar = h / z ** float(ps.hbar_exp)
    val = rad ** (1.0 / ps.r) * z ** -float(ps.lambda_exp) * lam + ps.gamma_hat + energy(hbar)
    return val if val.ndim else float(val)


def df_dz_fd(h, z, ps, lam, energy, step=1e-6):
    return (f_eval(h, z + step, ps, lam, energy) - f_eval(h, z - step, ps, lam, energy)) / (2 * step)


def bracket_valid(h, ps, lam, energy) -> np.ndarray:
    zt = ps.z_tilde(lam)
    h = np.atleast_1d(np.asarray(h, dtype=float))
    ok = radicand(h, 1.5 * zt, ps) > 0
    out = np.zeros(h.shape, dtype=bool)
    if ok.any():
        fl = f_eval(h[ok], np.full(ok.sum(), 0.5 * zt), ps, lam, energy)
        fh = f_eval(h[ok], np.full(ok.sum(), 1.5 * zt), ps, lam, energy)
        out[ok] = (fl > 0) & (fh < 0)
    return out


def bisect_roots(h, ps, lam, energy, iterations: int = 60) -> np.ndarray:
    """Vectorised bisection for z2(h) on [z~/2, 3 z~/2] (f decreasing in z)."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    ok = bracket_valid(h, ps, lam, energy)
    if not ok.all():
        bad = h[~ok]
        raise BracketError(f"no sign change on [z~/2, 3z~/2] for h = {bad.min():.4g}..{bad.max():.4g}")
    zt = ps.z_tilde(lam)
    lo = np.full(h.shape, 0.5 * zt)
    hi = np.full(h.shape, 1.5 * zt)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        pos = f_eval(h, mid, ps, lam, energy) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    return 0.5 * (lo + hi)


@dataclass
class RootCurve:
    ps: ParameterSet
    lam: float
    z_tilde: float
    h: np.ndarray
    z2: np.ndarray
    residual: np.ndarray
    hbar: np.ndarray
    h0: float
    energy: EnergyBranch = field(repr=False)

    def to_rows(self):
        return list(zip(self.h.tolist(), self.z2.tolist(), self.residual.tolist(), self.hbar.tolist()))

    def ansatz_margin(self) -> np.ndarray:
        return radicand(self.h, self.z2, self.ps)

    def z_of_h(self, h) -> np.ndarray:
        """Root at arbitrary h <= h0, z2(0) = z~ (solved, not interpolated)."""
        h = np.atleast_1d(np.asarray(h, dtype=float))
        out = np.full(h.shape, self.z_tilde)
        pos = h > 0
        if np.any(h > self.h0 * (1 + 1e-12)):
            raise CoverageError("h beyond h0")
        if pos.any():
            out[pos] = bisect_roots(h[pos], self.ps, self.lam, self.energy)
        return out

    def z_of_rho(self, rho) -> np.ndarray:
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        return self.z_of_h(rho ** -float(self.ps.kappa))

    def metadata(self) -> dict:
        return {"lambda": self.lam, "z_tilde": self.z_tilde, "h0": self.h0,
                "M_u": choose_Mu(self.ps, self), "branch_n": self.energy.n}


def hbar_range(ps: ParameterSet, lam: float, h_lo: float, h_hi: float) -> tuple[float, float]:
    """hbar values reachable from h in [h_lo, h_hi] with z in [z~/2, 3z~/2]."""
    zt = ps.z_tilde(lam)
    e = float(ps.hbar_exp)
    return h_lo / (1.5 * zt) ** e, h_hi / (0.5 * zt) ** e


def find_h0(ps: ParameterSet, lam: float, energy: EnergyBranch, h_grid: Sequence[float]) -> float:
    """Largest h with valid brackets at it and every smaller grid h."""
    h = np.sort(np.asarray(h_grid, dtype=float))
    h = h[h / (0.5 * ps.z_tilde(lam)) ** float(ps.hbar_exp) <= energy.hi]
    ok = bracket_valid(h, ps, lam, energy)
    if not ok.size or not ok[0]:
        raise BracketError("no valid bracket even at the smallest h")
    first_bad = np.nonzero(~ok)[0]
    return float(h[first_bad[0] - 1] if first_bad.size else h[-1])


def solve_curve(ps: ParameterSet, lam: float, h_grid: Sequence[float], energy: EnergyBranch) -> RootCurve:
    h = np.sort(np.asarray(h_grid, dtype=float))
    if np.any(h <= 0):
        raise ValueError("h grid must be positive")
    z2 = bisect_roots(h, ps, lam, energy)
    res = np.abs(f_eval(h, z2, ps, lam, energy))
    hbar = h / z2 ** float(ps.hbar_exp)
    return RootCurve(ps, lam, ps.z_tilde(lam), h, z2, res, hbar, float(h[-1]), energy)


def choose_Mu(ps: ParameterSet, curve: RootCurve) -> float:
    rho0 = curve.h0 ** (-1 / float(ps.kappa))
    return max(rho0, (1.5 * curve.z_tilde) ** (1 / (1 - float(ps.theta))))


def build_energy(ps: ParameterSet, lam: float, n: int = 0, h_lo: float = 1e-4,
                 h_hi: float = 0.125, per_decade: int = 40, **kw) -> EnergyBranch:
    lo, hi = hbar_range(ps, lam, h_lo, h_hi)
    table = branch(ps, n, geometric_grid(0.9 * lo, 1.1 * hi, per_decade), **kw)
    return EnergyBranch(table)


def uniqueness_witness(ps, lam, energy, h_values, subintervals: int = 50) -> list[int]:
    """Number of sign changes of f(h, .) on a uniform partition of the bracket."""
    zt = ps.z_tilde(lam)
    z = np.linspace(0.5 * zt, 1.5 * zt, subintervals + 1)
    counts = []
    for h in h_values:
        vals = f_eval(np.full(z.shape, h), z, ps, lam, energy)
        counts.append(int(np.sum(np.sign(vals[1:]) != np.sign(vals[:-1]))))
    return counts
