"""Exact polynomial symbols on T*R^4, Poisson brackets, bracket depth and the
symplectic rank of explicitly given strata.

Variables are ordered x1..x4, xi1..xi4; a symbol is a sparse map from
exponent 8-tuples to Fractions.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import sympy

NVARS = 8
VAR_NAMES = ("x1", "x2", "x3", "x4", "xi1", "xi2", "xi3", "xi4")
DEFAULT_DEGREE_CAP = 64
DEFAULT_DEPTH_CAP = 12


class CapExceededError(ValueError):
    pass


class DepthCapError(RuntimeError):
    """No nonzero bracket up to the configured length."""


class NotCharacteristicError(ValueError):
    """The point is not a common zero of all field symbols."""


Exponent = tuple[int, ...]


class Symbol:
    """Sparse polynomial with Fraction coefficients, always in canonical form."""

    __slots__ = ("terms", "cap")

    def __init__(self, terms: Mapping[Exponent, Fraction | int] | None = None,
                 cap: int = DEFAULT_DEGREE_CAP):
        clean = {}
        for e, c in (terms or {}).items():
            if len(e) != NVARS:
                raise ValueError("exponent tuples must have length 8")
            c = Fraction(c)
            if c:
                clean[tuple(e)] = clean.get(tuple(e), Fraction(0)) + c
        self.terms = {e: c for e, c in sorted(clean.items()) if c}
        self.cap = cap
        if self.terms and self.degree > cap:
            raise CapExceededError(f"degree {self.degree} exceeds cap {cap}")

    # construction helpers
    @classmethod
    def var(cls, i: int) -> "Symbol":
        e = [0] * NVARS
        e[i] = 1
        return cls({tuple(e): 1})

    @classmethod
    def const(cls, c) -> "Symbol":
        return cls({(0,) * NVARS: c})

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other) -> bool:
        if not isinstance(other, Symbol):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(tuple(self.terms.items()))

    def __repr__(self) -> str:
        return f"Symbol({self.to_text()})"

    def __neg__(self) -> "Symbol":
        return Symbol({e: -c for e, c in self.terms.items()}, self.cap)

    def __add__(self, other: "Symbol") -> "Symbol":
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, Fraction(0)) + c
        return Symbol(out, self.cap)

    def __sub__(self, other: "Symbol") -> "Symbol":
        return self + (-other)

    def __mul__(self, other) -> "Symbol":
        if not isinstance(other, Symbol):
            other = Symbol.const(other)
        out: dict[Exponent, Fraction] = {}
        for (e1, c1), (e2, c2) in itertools.product(self.terms.items(), other.terms.items()):
            e = tuple(a + b for a, b in zip(e1, e2))
            out[e] = out.get(e, Fraction(0)) + c1 * c2
        return Symbol(out, self.cap)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Symbol":
        out = Symbol.const(1)
        for _ in range(n):
            out = out * self
        return out

    def diff(self, i: int) -> "Symbol":
        out = {}
        for e, c in self.terms.items():
            if e[i]:
                f = list(e)
                f[i] -= 1
                out[tuple(f)] = c * e[i]
        return Symbol(out, self.cap)

    def __call__(self, point: Sequence) -> Fraction:
        pt = [Fraction(v) for v in point]
        total = Fraction(0)
        for e, c in self.terms.items():
            term = c
            for v, k in zip(pt, e):
                if k:
                    term *= v**k
            total += term
        return total

    def to_text(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for e, c in self.terms.items():
            mono = "*".join(f"{n}^{k}" if k > 1 else n for n, k in zip(VAR_NAMES, e) if k)
            coef = str(c)
            parts.append(f"({coef})*{mono}" if mono and c != 1 else (mono or f"({coef})"))
        return " + ".join(parts)


def poisson(a: Symbol, b: Symbol) -> Symbol:
    """{a, b} = sum_j da/dxi_j db/dx_j - da/dx_j db/dxi_j."""
    out = Symbol({}, min(a.cap, b.cap))
    for j in range(4):
        out = out + a.diff(4 + j) * b.diff(j) - a.diff(j) * b.diff(4 + j)
    return out


def ad_power(a: Symbol, b: Symbol, n: int) -> Symbol:
    for _ in range(n):
        b = poisson(a, b)
    return b


# ---------------------------------------------------------------------------
# text format


_SYMS = sympy.symbols(VAR_NAMES)


def parse_symbol(text: str) -> Symbol:
    expr = sympy.parse_expr(text.replace("^", "**"), local_dict=dict(zip(VAR_NAMES, _SYMS)))
    poly = sympy.Poly(sympy.expand(expr), *_SYMS, domain="QQ")
    return Symbol({e: Fraction(int(c.p), int(c.q)) for e, c in poly.as_dict().items()})


def parse_fields(text: str) -> list[Symbol]:
    """One polynomial per line; blank lines and '#' comments ignored."""
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(parse_symbol(line))
    return out


# ---------------------------------------------------------------------------
# the operators


X = [Symbol.var(i) for i in range(4)]
XI = [Symbol.var(4 + i) for i in range(4)]


def fields_P1(r: int, p: int, q: int) -> list[Symbol]:
    x1, x2 = X[0], X[1]
    return [XI[0], XI[1], x1 ** (r - 1) * XI[2], x1 ** (r - 1) * XI[3],
            x2 ** (p - 1) * XI[2], x2 ** (q - 1) * XI[3]]


def fields_P2(r: int, p: int, q: int) -> list[Symbol]:
    x1, x2 = X[0], X[1]
    return [XI[0], XI[1], x1 ** (r - 1) * XI[3], x2 ** (p - 1) * XI[2], x2 ** (q - 1) * XI[3]]


def fields_P1_rotated(r: int, p: int, q: int) -> list[Symbol]:
    s, d = X[0] + X[1], X[0] - X[1]
    return [XI[0], XI[1], s ** (r - 1) * XI[2], s ** (r - 1) * XI[3],
            d ** (p - 1) * XI[2], d ** (q - 1) * XI[3]]


OPERATORS = {"P1": fields_P1, "P2": fields_P2, "P1_rotated": fields_P1_rotated}


@dataclass
class CharVariety:
    equations: list[Symbol]
    factored: list[str]

    def contains(self, point) -> bool:
        nonzero = any(Fraction(v) for v in point[6:8])
        return nonzero and all(eq(point) == 0 for eq in self.equations)


def char_variety(name: str, r: int, p: int, q: int) -> CharVariety:
    """Defining system of Char(P) (the field symbols) plus the reduced description."""
    fields = OPERATORS[name](r, p, q)
    factored = {
        "P1": ["xi1 = 0", "xi2 = 0", "x1 = 0", "x2 = 0", "xi3^2 + xi4^2 > 0"],
        "P2": ["xi1 = 0", "xi2 = 0", "x2 = 0", "x1*xi4 = 0", "xi3^2 + xi4^2 > 0"],
        "P1_rotated": ["xi1 = 0", "xi2 = 0", "x1 + x2 = 0", "x1 - x2 = 0", "xi3^2 + xi4^2 > 0"],
    }[name]
    return CharVariety(fields, factored)


def reduced_predicate(name: str, point) -> bool:
    """Membership in the reduced description of Char(P)."""
    x1, x2, _, _, a, b, c, d = (Fraction(v) for v in point)
    if a or b or not (c or d):
        return False
    if name == "P1":
        return x1 == 0 and x2 == 0
    if name == "P2":
        return x2 == 0 and x1 * d == 0
    return x1 + x2 == 0 and x1 - x2 == 0


# ---------------------------------------------------------------------------
# depth and rank


@dataclass
class StratumReport:
    point: list[Fraction]
    depth: int
    witness: Symbol
    witness_word: tuple[int, ...]
    witness_value: Fraction
    rank: int | None = None
    name: str | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "point": [str(v) for v in self.point],
            "depth": self.depth,
            "witness_word": list(self.witness_word),
            "witness": self.witness.to_text(),
            "witness_value": str(self.witness_value),
            "symplectic_rank": self.rank,
        }


def depth_at(fields: Sequence[Symbol], point: Sequence, cap: int = DEFAULT_DEPTH_CAP,
             equations: Sequence[Symbol] | None = None) -> StratumReport:
    """Shortest iterated bracket {X_i1, {X_i2, ... X_ik}} nonzero at ``point``.

    Words are built right-nested; at each length distinct symbols (up to sign)
    are kept once.  ``equations``, if given, define the stratum through the
    point and the symplectic rank of its tangent space is reported.
    """
    pt = [Fraction(v) for v in point]
    if len(pt) != NVARS:
        raise ValueError("point must have 8 coordinates")
    for f in fields:
        if f(pt) != 0:
            raise NotCharacteristicError("point is not on the common zero set of the fields")
    level: dict[Symbol, tuple[int, ...]] = {}
    for i, f in enumerate(fields):
        if not f.is_zero():
            level.setdefault(f, (i,))
    seen = set(level) | {-s for s in level}
    for length in range(1, cap + 1):
        for s, word in level.items():
            val = s(pt)
            if val != 0:
                rank = symplectic_rank(equations, pt) if equations is not None else None
                return StratumReport(pt, length, s, word, val, rank)
        if length == cap:
            break
        nxt: dict[Symbol, tuple[int, ...]] = {}
        for i, f in enumerate(fields):
            for s, word in level.items():
                if word[0] == i and len(word) == 1:
                    continue  # {X, X} = 0
                b = poisson(f, s)
                if b.is_zero() or b in seen:
                    continue
                seen.add(b)
                seen.add(-b)
                nxt[b] = (i,) + word
        if not nxt:
            break
        level = nxt
    raise DepthCapError(f"no nonzero bracket up to length {cap}")


def symplectic_rank(equations: Sequence[Symbol], point: Sequence) -> int:
    """Rank of sum dxi_j ^ dx_j restricted to ker d(equations) at ``point`` (exact)."""
    pt = [Fraction(v) for v in point]
    rows = [[sympy.Rational(g.diff(i)(pt)) for i in range(NVARS)] for g in equations]
    jac = sympy.Matrix(rows) if rows else sympy.zeros(0, NVARS)
    basis = jac.nullspace() if rows else [sympy.eye(NVARS)[:, i] for i in range(NVARS)]
    if not basis:
        return 0
    B = sympy.Matrix.hstack(*basis)
    J = sympy.zeros(NVARS, NVARS)
    for j in range(4):
        J[4 + j, j] = 1
        J[j, 4 + j] = -1
    return int((B.T * J * B).rank())


# ---------------------------------------------------------------------------
# the named strata


@dataclass
class Stratum:
    name: str
    operator: str
    point: tuple
    equations: list[str]
    depth: str  # "r" or "p"
    rank: int


def strata() -> list[Stratum]:
    eq1 = ["x1", "x2", "xi1", "xi2"]
    eq2 = ["x2", "xi1", "xi2", "xi4"]
    eq3 = ["x1", "x2", "xi1", "xi2", "xi4"]
    out = [Stratum("Sigma1", "P1", (0, 0, 0, 0, 0, 0, 1, 0), eq1, "r", 4)]
    for s in (1, -1):
        tag = "+" if s > 0 else "-"
        out.append(Stratum(f"Sigma1{tag}", "P2", (0, 0, 0, 0, 0, 0, 0, s), eq1, "r", 4))
        out.append(Stratum(f"Sigma3{tag}", "P2", (0, 0, 0, 0, 0, 0, s, 0), eq3, "p", 2))
        for t in (1, -1):
            tag2 = "+" if t > 0 else "-"
            out.append(Stratum(f"Sigma2{tag}{tag2}", "P2", (t, 0, 0, 0, 0, 0, s, 0), eq2, "p", 2))
    return out


def check_stratum(st: Stratum, r: int, p: int, q: int) -> StratumReport:
    fields = OPERATORS[st.operator](r, p, q)
    eqs = [parse_symbol(e) for e in st.equations]
    rep = depth_at(fields, st.point, equations=eqs)
    rep.name = f"{st.operator}:{st.name}"
    return rep


def expected_depth(st: Stratum, r: int, p: int) -> int:
    return r if st.depth == "r" else p


# ---------------------------------------------------------------------------
# random instances for identity checks


def random_symbol(rng: random.Random, max_degree: int = 3, terms: int = 4,
                  coef_range: int = 5) -> Symbol:
    out = {}
    for _ in range(terms):
        deg = rng.randint(0, max_degree)
        e = [0] * NVARS
        for _ in range(deg):
            e[rng.randrange(NVARS)] += 1
        num = rng.randint(-coef_range, coef_range)
        den = rng.randint(1, coef_range)
        out[tuple(e)] = out.get(tuple(e), Fraction(0)) + Fraction(num, den)
    return Symbol(out)


def jacobi(a: Symbol, b: Symbol, c: Symbol) -> Symbol:
    return poisson(a, poisson(b, c)) + poisson(b, poisson(c, a)) + poisson(c, poisson(a, b))


def leibniz(a: Symbol, b: Symbol, c: Symbol) -> Symbol:
    return poisson(a, b * c) - (poisson(a, b) * c + b * poisson(a, c))


def identity_violations(count: int = 1000, seed: int = 0) -> dict[str, int]:
    rng = random.Random(seed)
    bad = {"jacobi": 0, "leibniz": 0, "antisymmetry": 0}
    for _ in range(count):
        a, b, c = (random_symbol(rng) for _ in range(3))
        bad["jacobi"] += not jacobi(a, b, c).is_zero()
        bad["leibniz"] += not leibniz(a, b, c).is_zero()
        bad["antisymmetry"] += not (poisson(a, b) + poisson(b, a)).is_zero()
    return bad
