"""The integral A(u) annihilated by P1, its x4-moments at the origin and the
Gevrey order they exhibit.

    A(u)(x) = int_{M_u}^inf exp(-i rho x4 + x3 z(rho) rho^theta - rho^theta)
              u1(tau(rho) rho^{1/r} x1) u2(rho^{1/q} x2, rho) d rho

u1 is an eigenfunction of -d^2 + y^{2(r-1)} (eigenvalue lam) and u2(., rho)
an eigenfunction of the double well at hbar(rho), in the variable
x = y2 t^{1/(q-1)} / z2^{1/(q-p)} with t = rho^{1/q - 1/r}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import curve_fit
from scipy.interpolate import CubicSpline
from scipy.special import gammaln, roots_laguerre

from .doublewell import (
    DEFAULT_POINTS_PER_SQRT,
    BranchTable,
    branch,
    geometric_grid,
    well_grid,
    well_potential,
)
from .params import ParameterSet
from .rootsolve import (
    BracketError,
    CoverageError,
    EnergyBranch,
    RootCurve,
    choose_Mu,
    find_h0,
    hbar_range,
    solve_curve,
)
from .spectral import EVEN, ODD, Potential, apply_operator, auto_grid, solve, solve_level

UNIT, FULL = "unit", "full"
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


class FitError(ValueError):
    """k-range too short for a stable two-parameter fit."""


class OutOfGridError(ValueError):
    pass


class StepSelectionError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# anharmonic factor


@dataclass
class AnharmonicMode:
    r: int
    index: int
    lam: float
    value_at_0: float  # u1(0) for even modes, u1'(0) for odd ones
    eps: int


def anharmonic(r: int, index: int = 0, n: int = 8001) -> AnharmonicMode:
    """Eigenpair ``index`` of -d^2 + y^{2(r-1)} (normalised, positive at 0+)."""
    pot = Potential.from_terms({2 * (r - 1): 1.0})
    grid = auto_grid(pot, 1.0, index + 1, n=n)
    pair = solve(pot, 1.0, grid, index + 1, extrapolate=True)[index]
    lam = pair.energy
    eps = index % 2
    h = pair.half
    if eps == 0:
        val = h[0]
    else:
        dx = pair.grid.dx
        # v(0) = 0 and odd symmetry: 8 v(dx) - v(2dx) = 6 dx v'(0) + O(dx^5)
        val = (8 * h[1] - h[2]) / (6 * dx)
    return AnharmonicMode(r, index, float(lam), float(abs(val)), eps)


# ---------------------------------------------------------------------------
# moment quadrature


def _integrand_log(u, k, theta, shift, log_amp):
    """log of the density in sigma = rho^theta, evaluated at sigma = e^u."""
    sigma = np.exp(u)
    a = (k + 1 + shift) / theta
    val = -sigma + (a - 1) * u - math.log(theta)
    if log_amp is not None:
        val = val + log_amp(sigma ** (1 / theta))
    return val


def _window(k, theta, shift, log_amp, u_lo, drop=60.0):
    # in u = log sigma the unit integrand e^{-sigma} sigma^a peaks at sigma = a
    a = (k + 1 + shift) / theta
    # when the lower limit is past the peak, measure the drop from the limit
    g = lambda u: -math.exp(u) + a * u
    start = max(math.log(a), u_lo)
    top = g(start)
    lo = hi = start
    while lo > u_lo and g(lo) > top - drop:
        lo -= 0.25
    while g(hi) > top - drop:
        hi += 0.25
    return max(lo, u_lo), hi


def _composite(lo, hi, panels, fn):
    edges = np.linspace(lo, hi, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    nodes = (mid + half * _GL_X).ravel()
    logw = np.log((half * _GL_W).ravel())
    vals = fn(nodes) + logw
    m = vals.max()
    return float(m + math.log(np.sum(np.exp(vals - m))))


def log_moment(k: int, theta: float, lower: float = 0.0, shift: float = 0.0,
               log_amp=None, tol: float = 1e-12, max_panels: int = 4096) -> tuple[float, float]:
    """log int_lower^inf e^{-rho^theta} rho^{k+shift} amp(rho) d rho and its error estimate.

    Composite Gauss-Legendre in u = log rho^theta over the window where the
    integrand is within e^-60 of its peak, doubled until stable.
    """
    theta = float(theta)
    u_lo = math.log(lower ** theta) if lower > 0 else -math.inf
    lo, hi = _window(k, theta, shift, log_amp, u_lo)
    fn = lambda u: _integrand_log(u, k, theta, shift, log_amp) + u
    panels = 8
    prev = _composite(lo, hi, panels, fn)
    while panels < max_panels:
        panels *= 2
        cur = _composite(lo, hi, panels, fn)
        if abs(cur - prev) <= tol:
            return cur, abs(cur - prev)
        prev = cur
    raise RuntimeError(f"moment quadrature did not converge for k={k}")


def gamma_moment(k, theta, shift=0.0) -> float:
    """log of the exact unit moment, Gamma((k+1+shift)/theta)/theta."""
    return float(gammaln((k + 1 + shift) / float(theta)) - math.log(float(theta)))


@dataclass
class MomentTable:
    k: np.ndarray
    log_M: np.ndarray
    error: np.ndarray
    eps: int
    mode: str
    theta: float
    lower: float
    meta: dict = field(default_factory=dict)

    def to_rows(self):
        return list(zip(self.k.tolist(), self.log_M.tolist(), self.error.tolist()))

    def convexity_violations(self, tol: float = 1e-9) -> int:
        d2 = self.log_M[2:] - 2 * self.log_M[1:-1] + self.log_M[:-2]
        return int(np.sum(d2 < -tol))


def unit_moments(theta, ks: Sequence[int], lower: float = 0.0, eps: int = 0, r: int = 1) -> MomentTable:
    shift = eps / r
    ks = np.asarray(ks, dtype=int)
    out = [log_moment(int(k), theta, lower, shift) for k in ks]
    return MomentTable(ks, np.array([o[0] for o in out]), np.array([o[1] for o in out]),
                       eps, UNIT, float(theta), float(lower))


# ---------------------------------------------------------------------------
# Gevrey fit


@dataclass
class GevreyFit:
    s: float
    log_C: float
    k_range: tuple[int, int]
    rms: float

    def to_dict(self) -> dict:
        return {"s": self.s, "log_C": self.log_C, "k_min": self.k_range[0],
                "k_max": self.k_range[1], "rms": self.rms}


def fit_gevrey(mt: MomentTable, k_min: int = 50, k_max: int = 200, rms_max: float = 1.0) -> GevreyFit:
    """Least squares for log M_k = s log k! + (k+1) log C on k_min..k_max."""
    if k_max - k_min < 30:
        raise FitError("k range must span at least 30")
    sel = (mt.k >= k_min) & (mt.k <= k_max)
    if sel.sum() < 10:
        raise FitError("too few moments in range")
    k = mt.k[sel].astype(float)
    A = np.column_stack([gammaln(k + 1), k + 1])
    coef, *_ = np.linalg.lstsq(A, mt.log_M[sel], rcond=None)
    rms = float(np.sqrt(np.mean((A @ coef - mt.log_M[sel]) ** 2)))
    if rms > rms_max:
        raise FitError(f"fit rms {rms:.3g} above threshold {rms_max}")
    return GevreyFit(float(coef[0]), float(coef[1]), (int(k.min()), int(k.max())), rms)


# ---------------------------------------------------------------------------
# the full construction


@dataclass
class Construction:
    ps: ParameterSet
    mode1: AnharmonicMode
    well_index: int
    energy: EnergyBranch
    curve: RootCurve
    Mu: float
    _log_amp: CubicSpline = field(repr=False)
    _inv_hbar: tuple[float, float] = field(repr=False)
    points_per_sqrt: float = DEFAULT_POINTS_PER_SQRT

    @property
    def lam(self) -> float:
        return self.mode1.lam

    @property
    def eps(self) -> int:
        return self.mode1.eps

    @property
    def derivative(self) -> bool:
        """Odd double-well branch: moments of A(d_{x2} u) instead of A(u)."""
        return self.well_index % 2 == 1

    @property
    def table(self) -> BranchTable:
        return self.energy.table

    # chain rho -> (h, t, z2, hbar)
    def chain(self, rho):
        ps = self.ps
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        t = rho ** float(ps.t_exp)
        h = t ** float(ps.h_exp)
        z = self.curve.z_of_h(h)
        hbar = h / z ** float(ps.hbar_exp)
        return h, t, z, hbar

    def tau(self, rho, z=None):
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if z is None:
            z = self.chain(rho)[2]
        rad = 1 - z**2 * rho ** (2 * (float(self.ps.theta) - 1))
        return rad ** (1 / (2 * self.ps.r))

    def log_u2_origin(self, hbar):
        """log u2(0) (even branch) or log u2'(0) in x (odd branch)."""
        inv = 1 / np.asarray(hbar, dtype=float)
        lo, hi = self._inv_hbar
        if np.any(inv < lo * (1 - 1e-12)) or np.any(inv > hi * (1 + 1e-12)):
            raise CoverageError("hbar outside the tunnelling table")
        return self._log_amp(inv)

    def log_amplitude(self, rho):
        """Everything in the moment integrand except e^{-rho^theta} rho^k, in log form."""
        ps = self.ps
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        h, t, z, hbar = self.chain(rho)
        out = self.log_u2_origin(hbar) + math.log(self.mode1.value_at_0)
        if self.eps:
            out = out + np.log(self.tau(rho, z))
        if self.derivative:
            # d/dx2 at 0 of u2(rho^{1/q} x2): chain factor of the two dilations
            out = out + np.log(t ** (1 / (ps.q - 1)) / z ** (1 / (ps.q - ps.p)))
        return out

    @property
    def power_shift(self) -> float:
        return self.eps / self.ps.r + (1 / self.ps.q if self.derivative else 0.0)

    def moments(self, k_max: int = 200, mode: str = FULL, k_min: int = 0) -> MomentTable:
        ks = np.arange(k_min, k_max + 1)
        theta = float(self.ps.theta)
        la = self.log_amplitude if mode == FULL else None
        out = [log_moment(int(k), theta, self.Mu, self.power_shift, la) for k in ks]
        meta = {"triple": list(self.ps.triple), "lambda": self.lam, "anh_index": self.mode1.index,
                "well_index": self.well_index, "M_u": self.Mu, "h0": self.curve.h0}
        return MomentTable(ks, np.array([o[0] for o in out]), np.array([o[1] for o in out]),
                           self.eps, mode, theta, self.Mu, meta)

    def amplitude_decay(self, rho_lo: float | None = None, rho_hi: float | None = None,
                        count: int = 40) -> tuple[float, float]:
        """(beta, C1) in log u2(0, rho) = c - C1 rho^beta, fitted over [rho_lo, rho_hi]."""
        theta = float(self.ps.theta)
        rho_lo = rho_lo or self.Mu
        rho_hi = rho_hi or 10 * (200 / theta) ** (1 / theta)
        rho = np.geomspace(rho_lo, rho_hi, count)
        la = self.log_u2_origin(self.chain(rho)[3])
        model = lambda lr, c, c1, beta: c - c1 * np.exp(beta * lr)
        try:
            popt, _ = curve_fit(model, np.log(rho), la, p0=(0.0, 1.0, float(self.ps.kappa)),
                                maxfev=20000)
        except RuntimeError as exc:
            raise FitError(f"decay fit failed: {exc}") from exc
        return float(popt[2]), float(popt[1])

    def positivity(self, rho) -> bool:
        """Sign of u2(0, rho) (or u2'(0, rho)) on the table rows that cover rho."""
        hbar = self.chain(rho)[3]
        rows = self.table.sorted()
        hb = rows.hbar
        sel = (hb >= hbar.min() * 0.9) & (hb <= hbar.max() * 1.1)
        return bool(np.all(rows.column("sign")[sel] > 0) and np.all(rows.column("positive_barrier")[sel]))

    def metadata(self) -> dict:
        return {"triple": list(self.ps.triple), "lambda": self.lam, "anh_index": self.mode1.index,
                "eps": self.eps, "well_index": self.well_index, "z_tilde": self.curve.z_tilde,
                "h0": self.curve.h0, "M_u": self.Mu, "table_rows": len(self.table.rows)}


def build(ps: ParameterSet, anh_index: int = 0, well_index: int = 0, *, h_lo: float = 1e-4,
          h_max: float | None = None, h_ceiling: float = 1.0, per_decade: int = 40,
          curve_points: int = 60, points_per_sqrt: float = DEFAULT_POINTS_PER_SQRT,
          workers: int = 1) -> Construction:
    """Assemble eigenvalue, branch table, root curve and M_u.

    With ``h_max=None`` the curve runs up to the largest h on a geometric grid
    (capped at ``h_ceiling``) whose bracket [z~/2, 3z~/2] is valid; a fixed
    ``h_max`` must itself have a valid bracket.
    """
    mode1 = anharmonic(ps.r, anh_index)
    lam = mode1.lam
    top = h_ceiling if h_max is None else h_max
    lo, hi = hbar_range(ps, lam, h_lo, top)
    table = branch(ps, well_index, geometric_grid(0.9 * lo, 1.1 * hi, per_decade),
                   points_per_sqrt=points_per_sqrt, workers=workers)
    energy = EnergyBranch(table)
    h_grid = np.geomspace(h_lo, top, curve_points)
    h0 = find_h0(ps, lam, energy, h_grid)
    if h_max is not None and h0 < h_max:
        raise BracketError(f"no valid bracket at h_max={h_max:.4g} (largest valid h {h0:.4g})")
    curve = solve_curve(ps, lam, h_grid[h_grid <= h0], energy)
    Mu = choose_Mu(ps, curve)
    inv = 1 / table.hbar
    order = np.argsort(inv)
    spline = CubicSpline(inv[order], table.log_amp[order])
    return Construction(ps, mode1, well_index, energy, curve, Mu, spline,
                        (float(inv.min()), float(inv.max())), points_per_sqrt)


# ---------------------------------------------------------------------------
# certification that P1 A(u) = 0


@dataclass
class ResidualReport:
    max_normalized: float
    samples: list[dict]
    perturbation: float = 0.0

    def to_dict(self) -> dict:
        return {"max_normalized": self.max_normalized, "perturbation": self.perturbation,
                "samples": self.samples}


def residual_chain(c: Construction, samples: Sequence[tuple[float, float]],
                   z_perturbation: float = 0.0) -> ResidualReport:
    """Apply the rescaled double-well equation to the computed u2 at (y2, rho).

    Each sample is mapped to x = y2 t^{1/(q-1)} / z2^{1/(q-p)} and the
    operator is evaluated at the nearest grid node of the eigenvector, so the
    result is (Q - E) v + f(h, z2) v.  ``z_perturbation`` replaces z2 by
    (1 + z_perturbation) z2 throughout (the identity should then fail).
    """
    ps = c.ps
    pot = well_potential(ps)
    rows = []
    worst = 0.0
    for y2, rho in samples:
        h, t, z, _ = (float(a[0]) for a in c.chain(rho))
        z = z * (1 + z_perturbation)
        hbar = h / z ** float(ps.hbar_exp)
        x = y2 * t ** (1 / (ps.q - 1)) / z ** (1 / (ps.q - ps.p))
        grid = well_grid(ps, hbar, c.well_index, c.points_per_sqrt)
        if abs(x) > grid.half_width:
            raise OutOfGridError(f"x={x:.4g} outside the eigenfunction grid")
        pair = solve_level(pot, hbar, grid, c.well_index)
        rad = 1 - z**2 * h ** float(ps.ansatz_exp)
        lam_term = rad ** (1 / ps.r) * z ** -float(ps.lambda_exp) * c.lam
        Qv = apply_operator(pot, hbar, grid, pair.v)
        i = int(round(x / grid.dx)) + grid.half
        res = lam_term * pair.v[i] + ps.gamma_hat * pair.v[i] + Qv[i]
        norm = (abs(pair.grid_energy) + abs(lam_term)) * np.max(np.abs(pair.v))
        val = abs(res) / norm
        worst = max(worst, val)
        rows.append({"y2": y2, "rho": rho, "x": float(grid.x[i]), "hbar": hbar, "residual": val})
    return ResidualReport(worst, rows, z_perturbation)


def random_samples(rng: np.random.Generator, count: int = 20, rho: float = 1e4,
                   y_max: float = 2.0) -> list[tuple[float, float]]:
    return [(float(y), rho) for y in rng.uniform(-y_max, y_max, count)]


def _local_solution(V, energy, mu, amplitude, xmax, parity):
    """Solve -mu^2 v'' + (V - energy) v = 0 from the origin; returns v(x) for |x| <= xmax.

    Even: v(0) = amplitude, v'(0) = 0.  Odd: v(0) = 0, v'(0) = amplitude.
    """
    rhs = lambda x, y: [y[1], (V(x) - energy) / mu**2 * y[0]]
    y0 = [1.0, 0.0] if parity == EVEN else [0.0, 1.0]
    sol = solve_ivp(rhs, (0.0, max(xmax, 1e-9)), y0, method="DOP853", rtol=1e-13,
                    atol=1e-15, dense_output=True)
    if not sol.success:
        raise RuntimeError(sol.message)
    sgn = 1.0 if parity == EVEN else -1.0

    def v(x):
        x = np.asarray(x, dtype=float)
        out = amplitude * sol.sol(np.abs(x))[0]
        return np.where(x < 0, sgn * out, out)

    return v


@dataclass
class SpotReport:
    points: list[list[float]]
    relative: list[float]
    relative_coarse: list[float]
    terms: list[list[float]]
    max_relative: float
    theta_phase: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class _NodeTable:
    """u1, u2 and phase data on the rho quadrature nodes of A(u)."""

    def __init__(self, c: Construction, nodes: int, xmax: float, theta_phase: float):
        ps = c.ps
        theta = float(ps.theta)
        s, w = roots_laguerre(nodes)
        sigma_u = c.Mu**theta
        sigma = sigma_u + s
        rho = sigma ** (1 / theta)
        h, t, z, hbar = c.chain(rho)
        self.rho, self.z, self.sigma = rho, z, sigma
        self.theta_phase = theta_phase
        # dsigma -> drho and e^{-sigma} split off by the Laguerre weight
        self.weight = w * math.exp(-sigma_u) * sigma ** (1 / theta - 1) / theta
        self.tau = c.tau(rho, z)
        self.s1 = self.tau * rho ** (1 / ps.r)
        self.s2 = rho ** (1 / ps.q) * t ** (1 / (ps.q - 1)) / z ** (1 / (ps.q - ps.p))
        well = well_potential(ps)
        anh = Potential.from_terms({2 * (ps.r - 1): 1.0})
        la = c.log_u2_origin(hbar)
        par2 = EVEN if c.well_index % 2 == 0 else ODD
        par1 = EVEN if c.eps == 0 else ODD
        E = c.energy(hbar)
        self.u1, self.u2 = [], []
        for i in range(nodes):
            amp = math.exp(la[i])
            self.u2.append(_local_solution(well, E[i], hbar[i], amp, self.s2[i] * xmax, par2))
            self.u1.append(_local_solution(anh, c.lam, 1.0, c.mode1.value_at_0,
                                           self.s1[i] * xmax, par1))

    def A(self, pts: np.ndarray) -> np.ndarray:
        """A(u) at each row of ``pts`` (complex)."""
        out = np.zeros(len(pts), dtype=complex)
        for i, rho in enumerate(self.rho):
            f1 = self.u1[i](self.s1[i] * pts[:, 0])
            f2 = self.u2[i](self.s2[i] * pts[:, 1])
            ph = np.exp(-1j * rho * pts[:, 3] + pts[:, 2] * self.z[i] * rho ** self.theta_phase)
            out += self.weight[i] * ph * f1 * f2
        return out


def _p1_terms(table: _NodeTable, x: np.ndarray, steps: np.ndarray, r: int, p: int, q: int):
    stencil = np.array([-2, -1, 0, 1, 2])
    coef = np.array([-1, 16, -30, 16, -1]) / 12.0
    pts = [x]
    for d in range(4):
        for s in stencil:
            if s:
                y = x.copy()
                y[d] += s * steps[d]
                pts.append(y)
    vals = table.A(np.array(pts))
    centre = vals[0]
    d2 = []
    j = 1
    for d in range(4):
        seq = [vals[j], vals[j + 1], centre, vals[j + 2], vals[j + 3]]
        j += 4
        d2.append(sum(cf * v for cf, v in zip(coef, seq)) / steps[d] ** 2)
    x1, x2 = x[0], x[1]
    # P1 = D1^2 + D2^2 + x1^{2(r-1)}(D3^2 + D4^2) + x2^{2(p-1)} D3^2 + x2^{2(q-1)} D4^2, D = -i d
    terms = [-d2[0], -d2[1], -x1 ** (2 * (r - 1)) * d2[2], -x1 ** (2 * (r - 1)) * d2[3],
             -x2 ** (2 * (p - 1)) * d2[2], -x2 ** (2 * (q - 1)) * d2[3]]
    return terms, centre


def spot_check_pde(c: Construction, points: Sequence[Sequence[float]], *, nodes: int = 80,
                   step_fraction: float = 0.02, theta_scale: float = 1.0,
                   tol: float = 1e-3) -> SpotReport:
    """|P1 A(u)| / sum |terms| at 4D points, by 4th-order central differences.

    u1, u2 are continued from the origin with the ODEs they satisfy, using the
    eigenvalue, amplitude and z2 of the construction; the quadrature in rho is
    Gauss-Laguerre in sigma - M_u^theta.  ``theta_scale`` multiplies theta in
    the x3 phase only (a sensitivity check: the cancellation must break).
    Steps are a fraction of the local scale of each variable at rho ~ M_u, and
    the result is recomputed with doubled steps; disagreement across the
    tolerance raises StepSelectionError.
    """
    ps = c.ps
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 4:
        raise ValueError("points must be 4D")
    theta = float(ps.theta)
    rho_e = (c.Mu**theta + 1) ** (1 / theta)
    h, t, z, hbar = (float(a[0]) for a in c.chain(rho_e))
    tau = float(c.tau(rho_e, z)[0])
    s2 = rho_e ** (1 / ps.q) * t ** (1 / (ps.q - 1)) / z ** (1 / (ps.q - ps.p))
    scales = np.array([1 / (tau * rho_e ** (1 / ps.r)), math.sqrt(hbar) / s2,
                       1 / (z * rho_e**theta), 1 / rho_e])
    steps = step_fraction * scales
    xmax = float(np.max(np.abs(pts))) + 4 * float(steps.max()) + 1e-3
    table = _NodeTable(c, nodes, xmax, theta * theta_scale)
    rel, rel2, all_terms = [], [], []
    for x in pts:
        out = []
        for factor in (1.0, 2.0):
            terms, _ = _p1_terms(table, x.copy(), steps * factor, ps.r, ps.p, ps.q)
            total = sum(terms)
            scale = sum(abs(tm) for tm in terms)
            out.append(abs(total) / scale)
            if factor == 1.0:
                all_terms.append([float(abs(tm)) for tm in terms])
        if (out[0] <= tol) != (out[1] <= tol):
            raise StepSelectionError(f"residual unstable under step doubling at {x.tolist()}")
        rel.append(out[0])
        rel2.append(out[1])
    return SpotReport(pts.tolist(), rel, rel2, all_terms, float(max(rel)), theta * theta_scale)
