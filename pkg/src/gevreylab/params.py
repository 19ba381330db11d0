"""Integer triple (r, p, q) and every exponent derived from it.

All exponents are kept as :class:`fractions.Fraction` so identities between
them can be checked exactly; transcendental constants (``gamma_hat``,
``x_star``, ``e_star``) are floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable


class ParameterError(ValueError):
    """Raised when (r, p, q) does not satisfy 1 < r < p < q."""


@dataclass(frozen=True)
class ParameterSet:
    r: int
    p: int
    q: int
    theta: Fraction = field(init=False)
    mu_exp: Fraction = field(init=False)
    kappa: Fraction = field(init=False)
    gamma_hat: float = field(init=False)
    x_star: float = field(init=False)
    e_star: float = field(init=False)

    def __post_init__(self):
        validate_triple(self.r, self.p, self.q)
        r, p, q = self.r, self.p, self.q
        theta = Fraction(1, r) + Fraction(r - 1, r) * Fraction(p - 1, q - 1)
        kappa = (Fraction(1, r) - Fraction(1, q)) * Fraction(q, q - 1)
        ratio = (p - 1) / (q - 1)
        gamma_hat = -((q - p) / (q - 1)) * ratio ** ((p - 1) / (q - p))
        x_star = ratio ** (1.0 / (2 * (q - p)))
        w2 = 4 * (p - 1) * (q - p) * x_star ** (2 * p - 4)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "mu_exp", Fraction(1, q))
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "gamma_hat", gamma_hat)
        object.__setattr__(self, "x_star", x_star)
        # harmonic frequency at the bottom of either well of -hbar^2 d^2 + W
        object.__setattr__(self, "e_star", math.sqrt(w2 / 2))

    @property
    def s0(self) -> Fraction:
        return 1 / self.theta

    @property
    def triple(self) -> tuple[int, int, int]:
        return (self.r, self.p, self.q)

    # exponents appearing in the reduction chain rho -> t -> h -> hbar
    @property
    def t_exp(self) -> Fraction:
        return Fraction(1, self.q) - Fraction(1, self.r)

    @property
    def h_exp(self) -> Fraction:
        return Fraction(self.q, self.q - 1)

    @property
    def hbar_exp(self) -> Fraction:
        """Power of z2 dividing h in hbar = h / z2**hbar_exp."""
        return Fraction(self.q, self.q - self.p)

    @property
    def ansatz_exp(self) -> Fraction:
        """Power of h multiplying z**2 inside the secular-equation radicand."""
        return Fraction(2 * (self.r - 1) * (self.q - self.p), self.q - self.r)

    @property
    def lambda_exp(self) -> Fraction:
        """Power of z dividing lambda in the secular equation."""
        return Fraction(2 * (self.q - 1), self.q - self.p)

    def z_tilde(self, lam: float) -> float:
        """Limit of z2(h) as h -> 0 for anharmonic eigenvalue ``lam``."""
        if lam <= 0:
            raise ParameterError("anharmonic eigenvalue must be positive")
        return (-lam / self.gamma_hat) ** ((self.q - self.p) / (2 * (self.q - 1)))

    def well_terms(self) -> dict[int, float]:
        """Polynomial part of W(x) = x^{2(q-1)} - x^{2(p-1)} - gamma_hat."""
        return {2 * (self.q - 1): 1.0, 2 * (self.p - 1): -1.0}

    def W(self, x):
        return x ** (2 * (self.q - 1)) - x ** (2 * (self.p - 1)) - self.gamma_hat

    def to_dict(self) -> dict:
        def rat(v: Fraction) -> dict:
            return {"rational": str(v), "decimal": float(v)}

        return {
            "r": self.r,
            "p": self.p,
            "q": self.q,
            "s0": rat(self.s0),
            "theta": rat(self.theta),
            "mu_exp": rat(self.mu_exp),
            "kappa": rat(self.kappa),
            "gamma_hat": {"decimal": self.gamma_hat},
            "x_star": {"decimal": self.x_star},
            "e_star": {"decimal": self.e_star},
        }


def validate_triple(r, p, q) -> None:
    for name, v in (("r", r), ("p", p), ("q", q)):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ParameterError(f"{name} must be an integer, got {v!r}")
    if not 1 < r:
        raise ParameterError(f"requires 1 < r (got r={r})")
    if not r < p:
        raise ParameterError(f"requires r < p (got r={r}, p={p})")
    if not p < q:
        raise ParameterError(f"requires p < q (got p={p}, q={q})")


def derive(r: int, p: int, q: int) -> ParameterSet:
    return ParameterSet(r, p, q)


def parse_triple(text: str) -> ParameterSet:
    """Parse ``"2,3,5"`` into a ParameterSet."""
    try:
        parts = [int(s) for s in text.replace(" ", "").split(",")]
    except ValueError as exc:
        raise ParameterError(f"cannot parse triple {text!r}") from exc
    if len(parts) != 3:
        raise ParameterError(f"expected three integers r,p,q, got {text!r}")
    return derive(*parts)


def exponent_chain(rho, ps: ParameterSet, z2_at_h=None):
    """Return (t, h, hbar) for frequency ``rho``.

    ``hbar`` is None when ``z2_at_h`` is not given.
    """
    if rho <= 0:
        raise ParameterError("rho must be positive")
    t = rho ** float(ps.t_exp)
    h = t ** float(ps.h_exp)
    if z2_at_h is None:
        return t, h, None
    if z2_at_h <= 0:
        raise ParameterError("z2 must be positive")
    return t, h, h / z2_at_h ** float(ps.hbar_exp)


def triples(lo: int = 2, hi: int = 9) -> Iterable[ParameterSet]:
    for r in range(lo, hi + 1):
        for p in range(r + 1, hi + 1):
            for q in range(p + 1, hi + 1):
                yield ParameterSet(r, p, q)


DEFAULT_MATRIX = ((2, 3, 5), (2, 3, 7), (3, 4, 6))
