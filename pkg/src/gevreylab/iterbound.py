"""Exact maximum of the derivative count allowed by the iteration constraints

    cond1: 0 <= N - K - (a2 + a5)/r - a3 - a4 - a6 - b (r-1)/r < 1
    cond2: 0 <= a5 (p-1) - b (q-1) - a2 < q - 1

objective K + a3 + a4 + a5 + a6 (K = k1 + ... + kh).  K, a3, a4, a6 enter
both cond1 and the objective with coefficient 1, so only their total matters.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from fractions import Fraction

from .params import ParameterSet


@dataclass(frozen=True)
class IterationInstance:
    N: int
    a2: int
    a3: int
    a4: int
    a5: int
    a6: int
    b: int
    K: int

    def objective(self, weight5: int = 1) -> int:
        return self.K + self.a3 + self.a4 + weight5 * self.a5 + self.a6

    def to_dict(self) -> dict:
        return asdict(self)


def cond1_slack(ps: ParameterSet, x: IterationInstance) -> Fraction:
    r = ps.r
    return (x.N - x.K - Fraction(x.a2 + x.a5, r) - x.a3 - x.a4 - x.a6
            - Fraction(x.b * (r - 1), r))


def cond2_slack(ps: ParameterSet, x: IterationInstance) -> int:
    return x.a5 * (ps.p - 1) - x.b * (ps.q - 1) - x.a2


def feasible(ps: ParameterSet, x: IterationInstance) -> bool:
    if min(x.a2, x.a3, x.a4, x.a5, x.a6, x.b, x.K) < 0:
        return False
    s1 = cond1_slack(ps, x)
    s2 = cond2_slack(ps, x)
    return 0 <= s1 < 1 and 0 <= s2 < ps.q - 1


def brute_max(ps: ParameterSet, N: int, weight5: int = 1) -> tuple[int, IterationInstance]:
    """Exact maximum over the reduced search (a5, b, a2), all in integers.

    For fixed (a5, b, a2) cond1 forces the collapsed total to
    floor((rN - a2 - a5 - b(r-1)) / r), which must be >= 0.
    """
    if N < 0:
        raise ValueError("N must be nonnegative")
    r, p, q = ps.r, ps.p, ps.q
    best = -1
    arg = None
    for a5 in range(r * N + 1):
        for b in range(a5 * (p - 1) // (q - 1) + 1):
            top = a5 * (p - 1) - b * (q - 1)
            for a2 in range(max(0, top - (q - 2)), top + 1):
                num = r * N - a2 - a5 - b * (r - 1)
                if num < 0:
                    continue
                K = num // r
                obj = K + weight5 * a5
                if obj > best:
                    best = obj
                    arg = IterationInstance(N, a2, 0, 0, a5, 0, b, K)
    return best, arg


def naive_max(ps: ParameterSet, N: int, weight5: int = 1) -> int:
    """Unreduced exhaustive search over all seven integers (small N only)."""
    r, p, q = ps.r, ps.p, ps.q
    best = -1
    lim = r * N + 1
    for a5, b, a2 in itertools.product(range(lim), range(lim), range(lim)):
        s2 = a5 * (p - 1) - b * (q - 1) - a2
        if not 0 <= s2 < q - 1:
            continue
        for K, a3, a4, a6 in itertools.product(range(N + 1), repeat=4):
            x = IterationInstance(N, a2, a3, a4, a5, a6, b, K)
            if 0 <= cond1_slack(ps, x) < 1:
                best = max(best, x.objective(weight5))
    return best


def lp_bound(ps: ParameterSet, N: int) -> Fraction:
    """Continuous relaxation optimum s0 (N + (r-1)/r)."""
    return ps.s0 * (N + Fraction(ps.r - 1, ps.r))


def table(ps: ParameterSet, Ns=(20, 40, 80, 160)) -> list[dict]:
    rows = []
    for N in Ns:
        m, w = brute_max(ps, N)
        rows.append({"N": N, "max": m, "ratio": m / N, "lp_bound": float(lp_bound(ps, N)),
                     "s0": float(ps.s0), "witness": w.to_dict()})
    return rows
