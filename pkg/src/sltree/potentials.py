"""Per-edge potentials q_i on [0, a_i] and the problem loader."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from collections.abc import Iterator, Mapping

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as P

from .tree import MetricTree, TreeError, build_tree, parse_tree_document

__all__ = [
    "EdgePotential",
    "Zero",
    "Constant",
    "Poly",
    "Sampled",
    "PotentialVector",
    "eval_q",
    "half_integral",
    "sum_K",
    "reverse",
    "parse_potential",
    "parse_problem",
    "load_problem",
]

_X_TOL = 1e-12


class EdgePotential:
    """Base class; subclasses are frozen dataclasses with a ``length`` field."""

    length: float
    closed_form = False

    def __call__(self, x):
        raise NotImplementedError

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        tol = _X_TOL * max(1.0, self.length)
        if np.any(x < -tol) or np.any(x > self.length + tol):
            raise ValueError(f"x outside [0, {self.length}]")
        return x

    def half_integral(self) -> float:
        raise NotImplementedError

    def reverse(self) -> "EdgePotential":
        raise NotImplementedError

    def shifted(self, c: float) -> "EdgePotential":
        raise NotImplementedError

    def scaled(self, s: float) -> "EdgePotential":
        raise NotImplementedError

    def bounds(self) -> tuple[float, float]:
        """(inf q, sup q) over the edge."""
        raise NotImplementedError

    def brief(self) -> str:
        return str(self)

    def abs_integral(self) -> float:
        xs = np.linspace(0.0, self.length, 4097)
        return float(np.trapezoid(np.abs(self(xs)), xs))


@dataclass(frozen=True)
class Zero(EdgePotential):
    length: float
    closed_form = True

    def __call__(self, x):
        x = self._check(x)
        return np.zeros_like(x) if x.ndim else 0.0

    def half_integral(self):
        return 0.0

    def reverse(self):
        return self

    def shifted(self, c):
        return Constant(float(c), self.length) if c else self

    def scaled(self, s):
        return self

    def bounds(self):
        return 0.0, 0.0

    def abs_integral(self):
        return 0.0

    def __str__(self):
        return "zero"


@dataclass(frozen=True)
class Constant(EdgePotential):
    c: float
    length: float
    closed_form = True

    def __call__(self, x):
        x = self._check(x)
        return np.full_like(x, self.c) if x.ndim else float(self.c)

    def half_integral(self):
        return 0.5 * self.c * self.length

    def reverse(self):
        return self

    def shifted(self, c):
        return Constant(self.c + c, self.length)

    def scaled(self, s):
        return Constant(self.c * s, self.length)

    def bounds(self):
        return self.c, self.c

    def abs_integral(self):
        return abs(self.c) * self.length

    def __str__(self):
        return f"constant {self.c!r}"


@dataclass(frozen=True)
class Poly(EdgePotential):
    """q(x) = c0 + c1 x + c2 x^2 + ..."""

    coeffs: tuple[float, ...]
    length: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not self.coeffs or not all(math.isfinite(c) for c in self.coeffs):
            raise ValueError("polynomial needs finite coefficients")

    def __call__(self, x):
        x = self._check(x)
        return P.polyval(x, self.coeffs)

    def half_integral(self):
        # exact antiderivative, no quadrature
        a = self.length
        return 0.5 * math.fsum(c * a ** (k + 1) / (k + 1) for k, c in enumerate(self.coeffs))

    def reverse(self):
        q = Polynomial(self.coeffs)(Polynomial([self.length, -1.0]))
        return Poly(tuple(q.coef), self.length)

    def shifted(self, c):
        return Poly((self.coeffs[0] + c,) + self.coeffs[1:], self.length)

    def scaled(self, s):
        return Poly(tuple(s * c for c in self.coeffs), self.length)

    def bounds(self):
        pts = [0.0, self.length]
        if len(self.coeffs) > 2:
            crit = Polynomial(self.coeffs).deriv().roots()
            pts += [r.real for r in crit if abs(r.imag) < 1e-12 and 0 <= r.real <= self.length]
        vals = P.polyval(np.array(pts), self.coeffs)
        return float(vals.min()), float(vals.max())

    def __str__(self):
        return "poly " + " ".join(repr(c) for c in self.coeffs)


@dataclass(frozen=True)
class Sampled(EdgePotential):
    """Piecewise-linear interpolant of ``values`` on a grid spanning [0, length]."""

    grid: tuple[float, ...]
    values: tuple[float, ...]
    length: float = field(default=None)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise ValueError("sampled potential needs matching grid/values of length >= 2")
        if np.any(np.diff(g) <= 0):
            raise ValueError("sample grid must be strictly increasing")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(v))):
            raise ValueError("sample grid/values must be finite")
        length = g[-1] if self.length is None else float(self.length)
        if abs(g[0]) > _X_TOL * max(1.0, length) or abs(g[-1] - length) > 1e-9 * max(1.0, length):
            raise ValueError(f"sample grid must span [0, {length}]")
        g[0], g[-1] = 0.0, length
        object.__setattr__(self, "grid", tuple(map(float, g)))
        object.__setattr__(self, "values", tuple(map(float, v)))
        object.__setattr__(self, "length", length)

    def __call__(self, x):
        x = self._check(x)
        out = np.interp(x, self.grid, self.values)
        return out if np.ndim(out) else float(out)

    def half_integral(self):
        return 0.5 * float(np.trapezoid(self.values, self.grid))

    def reverse(self):
        g = np.asarray(self.grid)
        return Sampled(tuple(self.length - g[::-1]), tuple(self.values[::-1]), self.length)

    def shifted(self, c):
        return Sampled(self.grid, tuple(v + c for v in self.values), self.length)

    def scaled(self, s):
        return Sampled(self.grid, tuple(v * s for v in self.values), self.length)

    def bounds(self):
        return min(self.values), max(self.values)

    def abs_integral(self):
        # exact for the piecewise-linear interpolant, including sign crossings
        total = 0.0
        for x0, x1, v0, v1 in zip(self.grid, self.grid[1:], self.values, self.values[1:]):
            h = x1 - x0
            if v0 * v1 >= 0:
                total += 0.5 * h * (abs(v0) + abs(v1))
            else:
                total += 0.5 * h * (v0 * v0 + v1 * v1) / (abs(v0) + abs(v1))
        return total

    def brief(self):
        lo, hi = self.bounds()
        return f"samples ({len(self.grid)} points, range [{lo:.6g}, {hi:.6g}])"

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return self.grid

    def __str__(self):
        return "samples " + " ".join(f"{x!r} {v!r}" for x, v in zip(self.grid, self.values))


def eval_q(p: EdgePotential, x):
    return p(x)


def half_integral(p: EdgePotential) -> float:
    return p.half_integral()


def reverse(p: EdgePotential) -> EdgePotential:
    return p.reverse()


@dataclass(frozen=True, eq=False)
class PotentialVector(Mapping):
    """Edge id -> EdgePotential, one entry per edge."""

    items_: Mapping[int, EdgePotential]

    def __post_init__(self):
        object.__setattr__(self, "items_", dict(sorted(self.items_.items())))

    @classmethod
    def zero(cls, tree: MetricTree) -> "PotentialVector":
        return cls({e.id: Zero(e.length) for e in tree.edges})

    @classmethod
    def constant(cls, tree: MetricTree, c: float) -> "PotentialVector":
        return cls({e.id: Constant(float(c), e.length) for e in tree.edges})

    def __getitem__(self, eid):
        return self.items_[eid]

    def __iter__(self) -> Iterator[int]:
        return iter(self.items_)

    def __len__(self):
        return len(self.items_)

    def check(self, tree: MetricTree) -> "PotentialVector":
        if set(self.items_) != set(tree.edge_ids):
            raise ValueError("potential vector must have exactly one entry per edge")
        for e in tree.edges:
            if abs(self[e.id].length - e.length) > 1e-9 * e.length:
                raise ValueError(f"potential on edge {e.id} has length {self[e.id].length}, edge has {e.length}")
        return self

    def replace(self, **changes) -> "PotentialVector":
        d = dict(self.items_)
        d.update({int(k): v for k, v in changes.items()})
        return PotentialVector(d)

    def with_edge(self, eid: int, p: EdgePotential) -> "PotentialVector":
        d = dict(self.items_)
        d[eid] = p
        return PotentialVector(d)

    def shifted(self, c: float) -> "PotentialVector":
        return PotentialVector({k: p.shifted(c) for k, p in self.items_.items()})

    def scaled(self, s: float) -> "PotentialVector":
        return PotentialVector({k: p.scaled(s) for k, p in self.items_.items()})

    def reversed_edges(self, ids) -> "PotentialVector":
        ids = set(ids)
        return PotentialVector({k: (p.reverse() if k in ids else p) for k, p in self.items_.items()})

    def sum_K(self) -> float:
        return math.fsum(p.half_integral() for p in self.items_.values())

    def bounds(self) -> tuple[float, float]:
        b = [p.bounds() for p in self.items_.values()]
        return min(lo for lo, _ in b), max(hi for _, hi in b)

    def sup_abs(self) -> float:
        lo, hi = self.bounds()
        return max(abs(lo), abs(hi))

    @property
    def is_zero(self) -> bool:
        return all(isinstance(p, Zero) for p in self.items_.values())

    def describe(self) -> str:
        return "\n".join(f"potential {k} {p}" for k, p in self.items_.items()) + "\n"

    def brief(self) -> str:
        return "; ".join(f"{k}: {p.brief()}" for k, p in self.items_.items())


def sum_K(Q: PotentialVector) -> float:
    return Q.sum_K()


def parse_potential(tokens: list[str], length: float) -> EdgePotential:
    kind, args = tokens[0], tokens[1:]
    try:
        nums = [float(a) for a in args]
    except ValueError:
        raise TreeError(f"non-numeric potential argument in {' '.join(tokens)!r}") from None
    if kind == "zero" and not nums:
        return Zero(length)
    if kind == "constant" and len(nums) == 1:
        return Constant(nums[0], length)
    if kind == "poly" and nums:
        return Poly(tuple(nums), length)
    if kind == "samples" and len(nums) >= 4 and len(nums) % 2 == 0:
        try:
            return Sampled(tuple(nums[0::2]), tuple(nums[1::2]), length)
        except ValueError as exc:
            raise TreeError(str(exc)) from None
    raise TreeError(f"bad potential spec {' '.join(tokens)!r}")


def parse_problem(text: str) -> tuple[MetricTree, PotentialVector]:
    """Tree plus potentials (missing entries default to zero).

    Potentials are written in the edge coordinates of the file; edges that had
    to be flipped to match the root get their potential reversed.
    """
    doc = parse_tree_document(text)
    tree, flipped = build_tree(doc)
    unknown = set(doc.potentials) - set(tree.edge_ids)
    if unknown:
        raise TreeError(f"potential for unknown edge(s) {sorted(unknown)}")
    pots = {}
    for e in tree.edges:
        spec = doc.potentials.get(e.id)
        p = Zero(e.length) if spec is None else parse_potential(spec, e.length)
        pots[e.id] = p.reverse() if e.id in flipped else p
    return tree, PotentialVector(pots)


def load_problem(path: str | Path) -> tuple[MetricTree, PotentialVector]:
    return parse_problem(Path(path).read_text(encoding="utf-8"))
