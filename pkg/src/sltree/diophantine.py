"""Simultaneous rational approximation by the pigeonhole construction.

For p = 0, 1, ..., n^I the vectors of fractional parts {p alpha_i} fall into
n^I subcubes of side 1/n, so two of them share a cell.  If p1 < p2 collide,
m = p2 - p1 and k_i = floor(p2 alpha_i) - floor(p1 alpha_i) satisfy
|m alpha_i - k_i| < 1/n, hence |alpha_i - k_i/m| < m^(-1-1/I) because m <= n^I.

Each alpha_i is held as a 128-bit fixed-point integer so that cell indices
and integer parts are exact for every p below the iteration budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .tree import MetricTree

__all__ = [
    "SimultaneousApprox",
    "BudgetExceeded",
    "simultaneous_approx",
    "detect_rational",
    "m_sequence",
    "tree_alphas",
    "FixedPoint",
]

DEFAULT_BUDGET = 10**7
_FRAC_BITS = 128
_MASK64 = (1 << 64) - 1
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


class BudgetExceeded(ValueError):
    def __init__(self, n: int, dim: int, budget: int):
        self.n, self.dim, self.budget = n, dim, budget
        self.max_feasible_n = _max_feasible_n(dim, budget)
        super().__init__(
            f"n^I + 1 = {n}^{dim} + 1 exceeds the iteration budget {budget}; "
            f"largest feasible n is {self.max_feasible_n}"
        )


def _max_feasible_n(dim: int, budget: int) -> int:
    n = max(1, int(round((budget - 1) ** (1.0 / dim))))
    while n > 1 and n**dim + 1 > budget:
        n -= 1
    while (n + 1) ** dim + 1 <= budget:
        n += 1
    return n


@dataclass(frozen=True)
class SimultaneousApprox:
    n: int
    m: int
    k: tuple[int, ...]
    errors: tuple[float, ...]
    rational: bool = False

    @property
    def dim(self) -> int:
        return len(self.k)

    @property
    def bound(self) -> float:
        return float(self.m) ** (-1.0 - 1.0 / self.dim)

    def satisfies_bound(self) -> bool:
        return all(e < self.bound for e in self.errors)


@dataclass(frozen=True)
class FixedPoint:
    """x in [0, 1) as floor(x * 2^128), with optional exact Fraction."""

    bits: int
    exact: Fraction | None = None

    @classmethod
    def from_value(cls, x) -> "FixedPoint":
        if isinstance(x, Fraction):
            return cls((x.numerator << _FRAC_BITS) // x.denominator, x)
        if isinstance(x, int):
            return cls(x << _FRAC_BITS, Fraction(x))
        with mpmath.workprec(_FRAC_BITS + 64):
            v = mpmath.mpf(x)
            return cls(int(mpmath.floor(v * mpmath.mpf(2) ** _FRAC_BITS)))

    def __float__(self):
        return float(self.exact) if self.exact is not None else self.bits / 2.0**_FRAC_BITS

    def error(self, k: int, m: int) -> float:
        """|x - k/m| (exact for rationals, 128-bit otherwise)."""
        if self.exact is not None:
            return float(abs(self.exact - Fraction(k, m)))
        return abs(self.bits * m - (k << _FRAC_BITS)) / (m * 2.0**_FRAC_BITS)


def _as_fixed(alphas) -> list[FixedPoint]:
    out = [a if isinstance(a, FixedPoint) else FixedPoint.from_value(a) for a in alphas]
    for a in out:
        if not 0 <= a.bits <= 1 << _FRAC_BITS:
            raise ValueError("alphas must lie in [0, 1]")
    return out


def detect_rational(alphas: Sequence, max_denominator: int = 10**6, tol: float = 1e-12):
    """Smallest common denominator p <= max_denominator with alpha_i = q_i/p, or None."""
    if max_denominator < 1:
        raise ValueError("max_denominator must be >= 1")
    fracs = []
    for a in alphas:
        x = a.exact if isinstance(a, FixedPoint) and a.exact is not None else a
        if isinstance(x, FixedPoint):
            x = float(x)
        f = Fraction(x).limit_denominator(max_denominator) if not isinstance(x, Fraction) else x
        if f.denominator > max_denominator or abs(float(x) - float(f)) > tol:
            return None
        fracs.append(f)
    p = 1
    for f in fracs:
        p = p * f.denominator // math.gcd(p, f.denominator)
        if p > max_denominator:
            return None
    return p, tuple(int(f * p) for f in fracs)


def _frac_top64(p: np.ndarray, bits: int) -> np.ndarray:
    """Top 64 bits of frac(p * x) for x = bits / 2^128 and p < 2^32.

    frac(p x) * 2^128 = (p * bits) mod 2^128; its top 64 bits are
    (p * hi + carry) mod 2^64, where carry = floor(p * lo / 2^64).
    """
    hi = np.uint64((bits >> 64) & _MASK64)
    l1 = np.uint64((bits >> 32) & 0xFFFFFFFF)
    l0 = np.uint64(bits & 0xFFFFFFFF)
    carry = (p * l1 + ((p * l0) >> _S32)) >> _S32
    return p * hi + carry


def _cells(p: np.ndarray, fixed: list[FixedPoint], n: int) -> np.ndarray:
    """Mixed-radix index of the 1/n-subcube containing ({p alpha_i})_i."""
    key = np.zeros(p.shape, dtype=np.uint64)
    nn = np.uint64(n)
    for a in fixed:
        t = _frac_top64(p, a.bits)
        # floor(t * n / 2^64) without overflow: split t into 32-bit halves
        c = ((t >> _S32) * nn + (((t & _MASK32) * nn) >> _S32)) >> _S32
        key = key * nn + c
    return key


def _pigeonhole(fixed: list[FixedPoint], n: int, budget: int) -> tuple[int, int]:
    """First colliding pair (p1, p2) in lexicographic order.

    This is the pair a nested loop ``for p1: for p2 > p1`` would stop at: the
    smallest p1 whose cell is revisited, with the earliest revisit p2.
    """
    dim = len(fixed)
    total = n**dim + 1
    if total > budget:
        raise BudgetExceeded(n, dim, budget)
    if total >= 1 << 32:
        raise BudgetExceeded(n, dim, 1 << 32)
    keys = np.empty(total, dtype=np.uint64)
    chunk = 1 << 20
    for start in range(0, total, chunk):
        p = np.arange(start, min(total, start + chunk), dtype=np.uint64)
        keys[start:start + len(p)] = _cells(p, fixed, n)
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    # within a run of equal keys the stable sort keeps p increasing
    dup = np.nonzero(sk[1:] == sk[:-1])[0]
    if dup.size == 0:
        raise AssertionError("pigeonhole failed; cell indexing is inconsistent")
    run_start = dup[np.r_[True, dup[1:] != dup[:-1] + 1]]
    best = int(np.argmin(order[run_start]))
    i = run_start[best]
    return int(order[i]), int(order[i + 1])


def _floor_mul(p: int, a: FixedPoint) -> int:
    return (p * a.bits) >> _FRAC_BITS


def simultaneous_approx(alphas: Sequence, n: int, *, budget: int = DEFAULT_BUDGET,
                        max_denominator: int = 10**6) -> SimultaneousApprox:
    """Common-denominator approximation of ``alphas`` (which sum to 1).

    Rational inputs take the shortcut m = n p, k_i = n q_i when that meets the
    bound; otherwise the first collision in (p1, p2) order is returned.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    fixed = _as_fixed(alphas)
    dim = len(fixed)
    if dim == 0:
        raise ValueError("need at least one alpha")
    total = math.fsum(float(a) for a in fixed)
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"alphas must sum to 1 (got {total!r})")

    rat = detect_rational(fixed, max_denominator)
    if rat is not None:
        p, q = rat
        m, k = n * p, tuple(n * x for x in q)
        errs = tuple(a.error(ki, m) for a, ki in zip(fixed, k))
        out = SimultaneousApprox(n, m, k, errs, rational=True)
        if out.satisfies_bound():
            return out

    p1, p2 = _pigeonhole(fixed, n, budget)
    m = p2 - p1
    k = tuple(_floor_mul(p2, a) - _floor_mul(p1, a) for a in fixed)
    errs = tuple(a.error(ki, m) for a, ki in zip(fixed, k))
    out = SimultaneousApprox(n, m, k, errs)
    if not out.satisfies_bound():
        raise AssertionError(f"approximation bound violated: {out}")
    return out


def m_sequence(alphas: Sequence, n_list: Sequence[int], *, budget: int = DEFAULT_BUDGET) -> list[SimultaneousApprox]:
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    fixed = _as_fixed(alphas)
    return [simultaneous_approx(fixed, n, budget=budget) for n in n_list]


def tree_alphas(tree: MetricTree) -> list[FixedPoint]:
    """a_i / L for each edge, exact when the lengths are symbolic."""
    exact = tree.exact_lengths()
    if exact and all(x.unit == "1" for x in exact):
        L = sum(x.coef for x in exact)
        return [FixedPoint.from_value(x.coef / L) for x in exact]
    if exact:
        with mpmath.workprec(_FRAC_BITS + 64):
            vals = [x.mp(_FRAC_BITS + 64) for x in exact]
            L = mpmath.fsum(vals)
            return [FixedPoint.from_value(v / L) for v in vals]
    L = tree.total_length
    return [FixedPoint.from_value(a / L) for a in tree.lengths]
