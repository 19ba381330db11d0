"""Finite-difference eigensolver for -mu^2 d^2/dx^2 + V(x) with even polynomial V.

The operator is discretised with the three-point stencil on a symmetric grid
[-L, L] (Dirichlet at both ends, n odd so x = 0 is a node).  Because V is even
the Jacobi matrix splits exactly into an even block (Neumann-like row at the
origin) and an odd block (Dirichlet at the origin).  Each block is solved with
Sturm-sequence bisection plus inverse iteration (LAPACK stebz/stein through
:func:`scipy.linalg.eigh_tridiagonal`), which keeps parity exact and keeps the
two members of a tunnelling doublet apart no matter how small the splitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal
from scipy.optimize import brentq

EVEN = "even"
ODD = "odd"
SPLITTING_FLAG = "splitting below resolution"


class SpectralError(RuntimeError):
    pass


class GridTooSmallError(SpectralError):
    pass


class ConvergenceError(SpectralError):
    pass


class AmbiguousParityError(SpectralError):
    pass


class InsufficientGridError(SpectralError):
    pass


@dataclass(frozen=True)
class Potential:
    """Even polynomial ``sum c_k x^k + offset`` (only even k > 0 in ``terms``)."""

    terms: tuple[tuple[int, float], ...]
    offset: float = 0.0

    def __post_init__(self):
        if not self.terms:
            raise ValueError("potential needs at least one non-constant term")
        for k, _ in self.terms:
            if k <= 0 or k % 2:
                raise ValueError(f"exponent {k} is not a positive even integer")
        k_lead, c_lead = max(self.terms)
        if c_lead <= 0:
            raise ValueError("potential is not confining: leading coefficient must be positive")

    @classmethod
    def from_terms(cls, terms: Mapping[int, float], offset: float = 0.0) -> "Potential":
        clean = tuple(sorted((int(k), float(c)) for k, c in terms.items() if c != 0))
        return cls(clean, float(offset))

    @property
    def degree(self) -> int:
        return max(k for k, _ in self.terms)

    @property
    def even(self) -> bool:
        return all(k % 2 == 0 for k, _ in self.terms)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.offset)
        for k, c in self.terms:
            out = out + c * x**k
        return out

    def derivative(self, x, order: int = 1):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k, c in self.terms:
            if k < order:
                continue
            coef = c * math.perm(k, order)
            out = out + coef * x ** (k - order)
        return out

    def minimiser(self) -> float:
        """Smallest x >= 0 where V is minimal (sampled, then polished)."""
        x_hi = 1.0
        while self(x_hi) <= self(0.0):
            x_hi *= 2
        xs = np.linspace(0.0, x_hi, 4001)
        i = int(np.argmin(self(xs)))
        if i == 0:
            return 0.0
        lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
        dv = lambda t: float(self.derivative(t))
        if dv(lo) < 0 < dv(hi):
            return brentq(dv, lo, hi, xtol=1e-15)
        return float(xs[i])

    def to_dict(self) -> dict:
        return {"terms": {str(k): c for k, c in self.terms}, "offset": self.offset}


@dataclass(frozen=True)
class SpectralGrid:
    half_width: float
    n: int

    def __post_init__(self):
        if self.n < 7 or self.n % 2 == 0:
            raise ValueError("grid point count must be odd and >= 7")
        if self.half_width <= 0:
            raise ValueError("half width must be positive")

    @property
    def dx(self) -> float:
        return 2 * self.half_width / (self.n - 1)

    @property
    def half(self) -> int:
        return (self.n - 1) // 2

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n)

    @classmethod
    def from_spacing(cls, half_width: float, dx: float) -> "SpectralGrid":
        N = max(3, math.ceil(half_width / dx - 1e-9))
        return cls(N * dx, 2 * N + 1)


@dataclass
class EigenPair:
    energy: float
    v: np.ndarray
    parity: str
    mu: float
    grid: SpectralGrid
    index: int
    grid_energy: float
    flags: tuple[str, ...] = field(default_factory=tuple)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def half(self) -> np.ndarray:
        """Samples on x >= 0 (index 0 is the origin)."""
        return self.v[self.grid.half:]

    def norm(self) -> float:
        return math.sqrt(np.trapezoid(self.v**2, dx=self.grid.dx))

    def to_rows(self):
        return list(zip(self.x.tolist(), self.v.tolist()))


# ---------------------------------------------------------------------------
# grid selection


def turning_point(pot: Potential, energy: float) -> float:
    """Outermost x >= 0 with V(x) = energy (0 if energy < V everywhere)."""
    x_hi = 1.0
    while pot(x_hi) <= energy:
        x_hi *= 2
    xs = np.linspace(0.0, x_hi, 2001)
    below = np.nonzero(pot(xs) <= energy)[0]
    if below.size == 0:
        return 0.0
    i = int(below[-1])
    return brentq(lambda t: float(pot(t)) - energy, xs[i], xs[i + 1], xtol=1e-14)


def agmon_margin(pot: Potential, mu: float, energy: float) -> float:
    """Five Airy lengths beyond the outer turning point of ``energy``."""
    xt = turning_point(pot, energy)
    slope = abs(float(pot.derivative(xt)))
    slope = max(slope, 1e-12)
    return 5 * (mu**2 / slope) ** (1 / 3)


def required_half_width(pot: Potential, mu: float, energy: float) -> float:
    return 1.5 * turning_point(pot, energy) + agmon_margin(pot, mu, energy)


def _estimate_top(pot: Potential, mu: float, m: int) -> float:
    L = max(1.0, turning_point(pot, float(pot(0.0)) + mu))
    for _ in range(40):
        N = int(min(max(400, math.ceil(L / (0.25 * math.sqrt(mu)))), 200_000))
        grid = SpectralGrid(L, 2 * N + 1)
        top = _levels_only(pot, mu, grid, m)[-1]
        need = required_half_width(pot, mu, top)
        if need <= L:
            return top
        L = 1.25 * need
    raise GridTooSmallError("could not size the domain for the requested levels")


def auto_grid(pot: Potential, mu: float, m: int = 1, *, n: int | None = None,
              dx: float | None = None) -> SpectralGrid:
    """Grid wide enough for the m lowest levels; fix either ``n`` or ``dx``."""
    L = required_half_width(pot, mu, _estimate_top(pot, mu, m))
    if dx is not None:
        return SpectralGrid.from_spacing(L, dx)
    return SpectralGrid(L, n or 4001)


def check_grid(pot: Potential, mu: float, grid: SpectralGrid, energy: float) -> None:
    xt = turning_point(pot, energy)
    margin = agmon_margin(pot, mu, energy)
    if xt + margin > grid.half_width:
        raise GridTooSmallError(
            f"turning point {xt:.4g} plus Agmon margin {margin:.3g} exceeds L={grid.half_width:.4g}"
        )


# ---------------------------------------------------------------------------
# sector matrices


def _sector(pot: Potential, mu: float, grid: SpectralGrid, parity: str):
    N = grid.half
    dx = grid.dx
    a = mu**2 / dx**2
    xh = np.arange(N) * dx
    V = pot(xh)
    if parity == EVEN:
        d = 2 * a + V
        e = np.full(N - 1, -a)
        e[0] = -math.sqrt(2) * a
    else:
        d = (2 * a + V)[1:]
        e = np.full(N - 2, -a)
    return d, e


def _eig(d, e, lo: int, hi: int, vectors: bool):
    try:
        return eigh_tridiagonal(d, e, eigvals_only=not vectors, select="i",
                                select_range=(lo, hi), lapack_driver="stebz")
    except (LinAlgError, ValueError) as exc:
        raise ConvergenceError(f"tridiagonal eigensolver failed for levels {lo}..{hi}: {exc}") from exc


def _levels_only(pot, mu, grid, m):
    ne, no = (m + 1) // 2, m // 2
    ev = _eig(*_sector(pot, mu, grid, EVEN), 0, ne - 1, False)
    levels = list(ev)
    if no:
        levels += list(_eig(*_sector(pot, mu, grid, ODD), 0, no - 1, False))
    return sorted(levels)


def _leading_sign(half: np.ndarray) -> float:
    # first node (from the origin) carrying a non-negligible value; inside the
    # barrier the origin sample itself may have underflowed
    big = np.nonzero(np.abs(half) >= 1e-6 * np.max(np.abs(half)))[0]
    return 1.0 if half[big[0]] >= 0 else -1.0


def _full_vector(w: np.ndarray, parity: str, grid: SpectralGrid) -> np.ndarray:
    N, dx = grid.half, grid.dx
    half = np.zeros(N + 1)
    if parity == EVEN:
        half[0] = w[0] / math.sqrt(dx)
        half[1:N] = w[1:] / math.sqrt(2 * dx)
        half *= _leading_sign(half)
        full = np.concatenate([half[:0:-1], half])
    else:
        half[1:N] = w / math.sqrt(2 * dx)
        half *= _leading_sign(half)
        full = np.concatenate([-half[:0:-1], half])
    return full


def resolution(mu: float, grid: SpectralGrid, energy: float) -> float:
    """Smallest eigenvalue gap the grid can witness in double precision."""
    return max(1e-13 * abs(energy), 64 * np.finfo(float).eps * (4 * mu**2 / grid.dx**2))


def sector_levels(pot: Potential, mu: float, grid: SpectralGrid, parity: str, count: int,
                  vectors: bool = True):
    """Lowest ``count`` eigenvalues (and full-line eigenvectors) of one parity block."""
    d, e = _sector(pot, mu, grid, parity)
    res = _eig(d, e, 0, count - 1, vectors)
    if not vectors:
        return np.asarray(res), None
    w, W = res
    return w, [_full_vector(W[:, j], parity, grid) for j in range(count)]


def _coarse_levels(pot, mu, grid, counts):
    cg = SpectralGrid(grid.half_width, 2 * (grid.half // 2) + 1)
    out = {}
    for parity, c in counts.items():
        if c:
            out[parity] = sector_levels(pot, mu, cg, parity, c, vectors=False)[0]
    return cg, out


def solve(pot: Potential, mu: float, grid: SpectralGrid | None = None, m: int = 1, *,
          extrapolate: bool = False, check: bool = True) -> list[EigenPair]:
    """The ``m`` lowest eigenpairs of -mu^2 d^2 + V, ascending.

    With ``extrapolate`` the reported ``energy`` is the Richardson combination
    of this grid and one with half the points; ``grid_energy`` is always the
    eigenvalue of the discrete operator the vector belongs to.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if mu <= 0:
        raise ValueError("mu must be positive")
    if grid is None:
        grid = auto_grid(pot, mu, m)
    counts = {EVEN: (m + 1) // 2, ODD: m // 2}
    sectors = {}
    for parity, c in counts.items():
        if c:
            sectors[parity] = sector_levels(pot, mu, grid, parity, c)
    if extrapolate:
        cg, coarse = _coarse_levels(pot, mu, grid, counts)
        f2, c2 = grid.dx**2, cg.dx**2
    pairs = []
    for k in range(m):
        parity = EVEN if k % 2 == 0 else ODD
        j = k // 2
        e_grid = float(sectors[parity][0][j])
        energy = e_grid
        if extrapolate:
            energy = float((c2 * e_grid - f2 * coarse[parity][j]) / (c2 - f2))
        pairs.append(EigenPair(energy, sectors[parity][1][j], parity, mu, grid, k, e_grid))
    for a, b in zip(pairs, pairs[1:]):
        if b.grid_energy - a.grid_energy <= resolution(mu, grid, a.grid_energy):
            a.flags = a.flags + (SPLITTING_FLAG,)
            b.flags = b.flags + (SPLITTING_FLAG,)
    if check:
        check_grid(pot, mu, grid, pairs[-1].grid_energy)
    return pairs


def solve_level(pot: Potential, mu: float, grid: SpectralGrid, index: int) -> EigenPair:
    """Single eigenpair ``index`` (parity alternates with index)."""
    parity = EVEN if index % 2 == 0 else ODD
    j = index // 2
    d, e = _sector(pot, mu, grid, parity)
    w, W = _eig(d, e, j, j, True)
    v = _full_vector(W[:, 0], parity, grid)
    return EigenPair(float(w[0]), v, parity, mu, grid, index, float(w[0]))


# ---------------------------------------------------------------------------
# discrete operator identities


def apply_operator(pot: Potential, mu: float, grid: SpectralGrid, v: np.ndarray) -> np.ndarray:
    """(-mu^2 D2 + V) v with zero Dirichlet data beyond the grid ends."""
    padded = np.concatenate([[0.0], v, [0.0]])
    lap = (padded[2:] - 2 * padded[1:-1] + padded[:-2]) / grid.dx**2
    out = -mu**2 * lap + pot(grid.x) * v
    out[0] = out[-1] = 0.0
    return out


def eigen_residual(pot: Potential, pair: EigenPair) -> float:
    r = apply_operator(pot, pair.mu, pair.grid, pair.v) - pair.grid_energy * pair.v
    return math.sqrt(np.sum(r**2) * pair.grid.dx)


def inner(a: EigenPair, b: EigenPair) -> float:
    return float(np.sum(a.v * b.v) * a.grid.dx)


def energy_identity(pot: Potential, pair: EigenPair) -> float:
    """mu^2 ||D+ v||^2 + <V v, v>, equal to the grid eigenvalue."""
    dv = np.diff(pair.v) / pair.grid.dx
    kinetic = np.sum(dv**2) * pair.grid.dx
    return float(pair.mu**2 * kinetic + np.sum(pot(pair.x) * pair.v**2) * pair.grid.dx)


def kinetic_norm2(pair: EigenPair) -> float:
    """||v'||^2 with forward differences (matches the discrete quadratic form)."""
    dv = np.diff(pair.v) / pair.grid.dx
    return float(np.sum(dv**2) * pair.grid.dx)


def parity_of(v: np.ndarray, tol: float = 1e-8) -> str:
    v = np.asarray(v, dtype=float)
    scale = np.max(np.abs(v))
    if scale == 0:
        raise AmbiguousParityError("zero vector has no parity")
    rev = v[::-1]
    if np.max(np.abs(v - rev)) <= tol * scale:
        return EVEN
    if np.max(np.abs(v + rev)) <= tol * scale:
        return ODD
    raise AmbiguousParityError("vector is neither even nor odd to tolerance")


def centered_derivative(v: np.ndarray, dx: float, order: int) -> np.ndarray:
    if order == 0:
        return np.asarray(v)
    padded = np.concatenate([[0.0], v, [0.0]])
    if order == 1:
        return (padded[2:] - padded[:-2]) / (2 * dx)
    if order == 2:
        return (padded[2:] - 2 * padded[1:-1] + padded[:-2]) / dx**2
    raise ValueError("only derivative orders 0, 1, 2 are supported")


# ---------------------------------------------------------------------------
# a priori inequality and derivative scaling


@dataclass
class AprioriReport:
    mu: float
    trials: int
    ratios: np.ndarray
    seed: int

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios))

    def to_dict(self) -> dict:
        return {"mu": self.mu, "trials": self.trials, "seed": self.seed,
                "max_ratio": self.max_ratio, "mean_ratio": float(np.mean(self.ratios))}


def apriori_ratio(pot: Potential, mu: float, x: np.ndarray, v: np.ndarray, d2v: np.ndarray) -> float:
    """(mu^2 ||v''|| + ||V v||) / (||Q_mu v|| + mu ||v||) by trapezoid quadrature."""
    dx = x[1] - x[0]
    nrm = lambda f: math.sqrt(np.trapezoid(f**2, dx=dx))
    Vv = pot(x) * v
    den = nrm(-mu**2 * d2v + Vv) + mu * nrm(v)
    if den == 0:
        raise ValueError("degenerate test function: zero denominator")
    return (mu**2 * nrm(d2v) + nrm(Vv)) / den


def gaussian_test_function(center: float, width: float, coeffs: Sequence[float], x: np.ndarray):
    """v = P(x - c) exp(-(x-c)^2 / (2 w^2)) and its exact second derivative."""
    P = np.polynomial.Polynomial(coeffs)
    s = np.polynomial.Polynomial([0.0, 1.0])
    w2 = width**2
    # v'' = (P'' - 2 s P'/w^2 - P/w^2 + s^2 P / w^4) G with s = x - c
    R = P.deriv(2) - 2 * s * P.deriv() / w2 - P / w2 + s**2 * P / w2**2
    t = x - center
    G = np.exp(-(t**2) / (2 * w2))
    return P(t) * G, R(t) * G


def verify_apriori(pot: Potential, mu: float, trials: int = 100, *, seed: int = 0,
                   center_range: float | None = None, degree: int = 4) -> AprioriReport:
    """Max of the a priori ratio over random Gaussian-times-polynomial test functions.

    Every mu uses the same underlying uniform draws, so sweeps over mu compare
    like with like.
    """
    if center_range is None:
        xm = pot.minimiser()
        center_range = 2 * xm if xm > 0 else 1.0
    rng = np.random.default_rng(seed)
    ratios = np.empty(trials)
    lo_w = min(math.sqrt(mu), 1.0)
    for i in range(trials):
        u_c, u_w = rng.uniform(-1, 1), rng.uniform(0, 1)
        deg = int(rng.integers(0, degree + 1))
        coeffs = rng.normal(size=deg + 1)
        center = center_range * u_c
        width = lo_w + (1.0 - lo_w) * u_w
        x = np.linspace(center - 14 * width, center + 14 * width, 8001)
        v, d2v = gaussian_test_function(center, width, coeffs * width ** -np.arange(deg + 1), x)
        ratios[i] = apriori_ratio(pot, mu, x, v, d2v)
    return AprioriReport(mu, trials, ratios, seed)


@dataclass
class DerivativeScalingReport:
    mus: np.ndarray
    sups: np.ndarray  # shape (3, len(mus))
    betas: np.ndarray
    bounds: np.ndarray

    def to_dict(self) -> dict:
        return {"mus": self.mus.tolist(), "betas": self.betas.tolist(),
                "bounds": self.bounds.tolist(), "sups": self.sups.tolist()}


def verify_derivative_scaling(pairs: Sequence[EigenPair]) -> DerivativeScalingReport:
    """Fit sup|v^(j)| ~ mu^(-beta_j), j = 0, 1, 2, across one eigenbranch."""
    if len(pairs) < 4:
        raise InsufficientGridError("need at least 4 mu samples")
    mus = np.array([p.mu for p in pairs])
    if mus.max() / mus.min() < 10 * (1 - 1e-9):
        raise InsufficientGridError("mu samples must span at least one decade")
    sups = np.array([[np.max(np.abs(centered_derivative(p.v, p.grid.dx, j))) for p in pairs]
                     for j in range(3)])
    lm = np.log(mus)
    betas = np.array([-np.polyfit(lm, np.log(sups[j]), 1)[0] for j in range(3)])
    bounds = np.array([(j + 1) / 2 for j in range(3)])
    return DerivativeScalingReport(mus, sups, betas, bounds)
