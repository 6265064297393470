"""Characteristic functions of the Neumann and Dirichlet-Neumann problems.

``char_pair`` evaluates (phi_N, phi_D) by repeatedly peeling a boundary edge:

    phi_N = C(a) N~ - C'(a) D~,      phi_D = -S(a) N~ + S'(a) D~,

where N~ is the Neumann/Kirchhoff function of the remainder and D~ is the
product of the Dirichlet-Neumann functions of the pieces obtained by cutting
at the attachment vertex.  Single edges use (-C'(a), S'(a)).  When the
Dirichlet vertex of a piece sits at the parent end of its edge, the edge is
read backwards, which swaps C(a) and S'(a).

``det_char`` is the independent check: it assembles the full 2I x 2I linear
system for the coefficients (A_i, B_i) of y_i = A_i C_i + B_i S_i and takes
its determinant.  Only the zero sets of the two are expected to agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Callable

import numpy as np

from .potentials import PotentialVector
from .transfer import TransferValues, transfer_at
from .tree import MetricTree, TreeError, next_leaf, peel

__all__ = [
    "CharPair",
    "AssembledMatrix",
    "char_pair",
    "psi_pair",
    "det_char",
    "assemble",
    "sumK_estimate",
    "psi_scale",
    "characteristic",
    "EstimatorError",
]


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class CharPair:
    phiN: np.ndarray
    phiD: np.ndarray
    lam: np.ndarray


class _Plan:
    """Peeling structure of a tree, cached by (edge set, port vertex)."""

    def __init__(self, tree: MetricTree):
        self.tree = tree
        self._trees: dict[frozenset, MetricTree] = {tree.edge_set(): tree}
        self._steps: dict[tuple, tuple] = {}
        self._leaf: dict[frozenset, int] = {}

    def sub(self, es: frozenset) -> MetricTree:
        t = self._trees.get(es)
        if t is None:
            t = self._trees[es] = self.tree.subtree(sorted(es))
        return t

    def step(self, es: frozenset, port: int):
        key = (es, port)
        out = self._steps.get(key)
        if out is None:
            t = self.sub(es)
            eid = t.incident(port)[0]
            ps = peel(t, eid, port)
            subs = tuple(s.edge_set() for s, _ in ps.dirichlet_subtrees)
            for s, _ in ps.dirichlet_subtrees:
                self._trees.setdefault(s.edge_set(), s)
            rem = ps.neumann_remainder.edge_set()
            self._trees.setdefault(rem, ps.neumann_remainder)
            out = self._steps[key] = (eid, port == t.edge(eid).child, rem, ps.attachment_vertex, subs)
        return out

    def leaf(self, es: frozenset) -> int:
        v = self._leaf.get(es)
        if v is None:
            v = self._leaf[es] = next_leaf(self.sub(es))[1]
        return v


_PLANS: dict[MetricTree, _Plan] = {}


def _plan(tree: MetricTree) -> _Plan:
    p = _PLANS.get(tree)
    if p is None:
        if len(_PLANS) > 256:
            _PLANS.clear()
        p = _PLANS[tree] = _Plan(tree)
    return p


def default_port(tree: MetricTree) -> int:
    if tree.n_edges == 1:
        return tree.edges[0].child
    return next_leaf(tree)[1]


def _peel_eval(plan: _Plan, tv: dict[int, TransferValues], port: int):
    """(N, D) of the whole tree with the Dirichlet vertex at ``port``."""
    pairs: dict[tuple, tuple] = {}
    neumanns: dict[frozenset, object] = {}

    def oriented(eid, at_child):
        t = tv[eid]
        return t if at_child else t.reversed()

    def pair(es, v):
        key = (es, v)
        if key in pairs:
            return pairs[key]
        if len(es) == 1:
            (eid,) = es
            t = oriented(eid, v == plan.tree.edge(eid).child)
            out = (-t.Cp, t.Sp)
        else:
            eid, at_child, rem, attach, subs = plan.step(es, v)
            t = oriented(eid, at_child)
            n_t = neumann(rem)
            d_t = reduce(lambda acc, s: acc * pair(s, attach)[1], subs[1:], pair(subs[0], attach)[1])
            out = (t.C * n_t - t.Cp * d_t, -t.S * n_t + t.Sp * d_t)
        pairs[key] = out
        return out

    def neumann(es):
        if es in neumanns:
            return neumanns[es]
        if len(es) == 1:
            (eid,) = es
            out = -tv[eid].Cp
        else:
            out = pair(es, plan.leaf(es))[0]
        neumanns[es] = out
        return out

    return pair(plan.tree.edge_set(), port)


def _check_port(tree: MetricTree, v: int | None) -> int:
    if v is None:
        return default_port(tree)
    if v not in tree.vertices or tree.degree(v) != 1:
        raise TreeError(f"dirichlet_leaf {v} is not a pendant vertex")
    return v


def transfer_table(tree: MetricTree, Q: PotentialVector, lam) -> dict[int, TransferValues]:
    return {e.id: transfer_at(Q[e.id], e.length, lam) for e in tree.edges}


def char_pair(tree: MetricTree, Q: PotentialVector, lam, dirichlet_leaf: int | None = None) -> CharPair:
    """(phi_N, phi_D) at ``lam`` (scalar or array) via leaf peeling."""
    port = _check_port(tree, dirichlet_leaf)
    tv = transfer_table(tree, Q, lam)
    n, d = _peel_eval(_plan(tree), tv, port)
    return CharPair(n, d, lam)


def _psi_values(a: float, lam) -> TransferValues:
    # (C, C'/rho, rho S, S') for q = 0; for lam < 0 the N-component is divided by i
    lam = np.asarray(lam, dtype=float)
    w = np.sqrt(np.abs(lam)) * a
    pos = lam >= 0
    c, cp, s = np.empty_like(w), np.empty_like(w), np.empty_like(w)
    c[pos], cp[pos], s[pos] = np.cos(w[pos]), -np.sin(w[pos]), np.sin(w[pos])
    neg = ~pos
    c[neg], cp[neg] = np.cosh(w[neg]), -np.sinh(w[neg])
    s[neg] = cp[neg]
    if lam.ndim == 0:
        c, cp, s = float(c), float(cp), float(s)
    return TransferValues(c, cp, s, c, lam)


def psi_pair(tree: MetricTree, lam, dirichlet_leaf: int | None = None) -> CharPair:
    """Zero-potential pair built from sin/cos (sinh/cosh for lam < 0).

    Normalised so that psi_N(single edge) = sin(rho a) and psi_D = cos(rho a);
    phi_N = psi_scale(lam) * psi_N and phi_D = psi_D when Q = 0.
    """
    port = _check_port(tree, dirichlet_leaf)
    tv = {e.id: _psi_values(e.length, lam) for e in tree.edges}
    n, d = _peel_eval(_plan(tree), tv, port)
    return CharPair(n, d, lam)


def psi_scale(lam):
    """rho for lam >= 0, -sqrt(-lam) for lam < 0."""
    lam = np.asarray(lam, dtype=float)
    out = np.where(lam >= 0, np.sqrt(np.abs(lam)), -np.sqrt(np.abs(lam)))
    return float(out) if out.ndim == 0 else out


# --- determinant oracle ---------------------------------------------------

@dataclass(frozen=True)
class AssembledMatrix:
    matrix: np.ndarray          # (..., 2I, 2I)
    rows: tuple[str, ...]
    columns: tuple[str, ...]


def assemble(tree: MetricTree, Q: PotentialVector, lam, dirichlet_leaf: int | None = None) -> AssembledMatrix:
    """Coefficient matrix of the vertex conditions in the unknowns (A_i, B_i).

    Rows: one per pendant vertex (Neumann, or Dirichlet at ``dirichlet_leaf``),
    then per internal vertex deg-1 continuity rows and one Kirchhoff row.
    B-columns are multiplied and derivative rows divided by max(1, |rho|);
    both scalings are lambda-dependent but never zero.
    """
    if dirichlet_leaf is not None:
        _check_port(tree, dirichlet_leaf)
    lam = np.asarray(lam, dtype=float)
    tv = transfer_table(tree, Q, lam)
    col = {e.id: 2 * j for j, e in enumerate(tree.edges)}
    nI = tree.n_edges
    M = np.zeros(lam.shape + (2 * nI, 2 * nI))
    s = np.maximum(1.0, np.sqrt(np.abs(lam)))
    one, zero = np.ones_like(lam), np.zeros_like(lam)

    def value(eid, v):
        e = tree.edge(eid)
        if v == e.child:
            return one, zero
        t = tv[eid]
        return t.C * one, t.S * s

    def deriv(eid, v):
        e = tree.edge(eid)
        if v == e.child:
            return zero, one
        t = tv[eid]
        return t.Cp / s, t.Sp * one

    rows: list[str] = []
    r = 0
    for v in tree.pendant_vertices:
        (eid,) = tree.incident(v)
        if v == dirichlet_leaf:
            a_, b_ = value(eid, v)
            rows.append(f"dirichlet v{v}")
        else:
            a_, b_ = deriv(eid, v)
            rows.append(f"neumann v{v}")
        M[..., r, col[eid]] = a_
        M[..., r, col[eid] + 1] = b_
        r += 1
    for v in tree.internal_vertices:
        inc = tree.incident(v)
        a0, b0 = value(inc[0], v)
        for eid in inc[1:]:
            a_, b_ = value(eid, v)
            M[..., r, col[inc[0]]] += a0
            M[..., r, col[inc[0]] + 1] += b0
            M[..., r, col[eid]] -= a_
            M[..., r, col[eid] + 1] -= b_
            rows.append(f"continuity v{v} e{inc[0]}=e{eid}")
            r += 1
        for eid in inc:
            # outgoing derivative: +y'(0) at a child end, -y'(a) at a parent end
            sign = 1.0 if v == tree.edge(eid).child else -1.0
            a_, b_ = deriv(eid, v)
            M[..., r, col[eid]] += sign * a_
            M[..., r, col[eid] + 1] += sign * b_
        rows.append(f"kirchhoff v{v}")
        r += 1
    if r != 2 * nI:
        raise TreeError(f"assembled {r} rows for {nI} edges; malformed tree")
    cols = tuple(f"{ab}{e.id}" for e in tree.edges for ab in ("A", "B"))
    return AssembledMatrix(M, tuple(rows), cols)


def det_char(tree: MetricTree, Q: PotentialVector, lam, dirichlet_leaf: int | None = None):
    """Determinant of :func:`assemble` (LU with partial pivoting)."""
    d = np.linalg.det(assemble(tree, Q, lam, dirichlet_leaf).matrix)
    return float(d) if np.ndim(d) == 0 else d


# --- asymptotics -----------------------------------------------------------

def sumK_estimate(tree: MetricTree, Q: PotentialVector, rho_n: float, *, min_psiD: float = 0.1) -> float:
    """(rho psi_N(rho) - phi_N(rho)) / psi_D(rho), which tends to sum K_i."""
    lam = float(rho_n) ** 2
    phi = char_pair(tree, Q, lam)
    psi = psi_pair(tree, lam)
    if abs(psi.phiD) < min_psiD:
        raise EstimatorError(f"|psi_D({rho_n:.6g})| = {abs(psi.phiD):.3g} < {min_psiD}")
    return (rho_n * psi.phiN - phi.phiN) / psi.phiD


def characteristic(
    tree: MetricTree,
    Q: PotentialVector | None = None,
    *,
    method: str = "recursion",
    dirichlet_leaf: int | None = None,
    which: str | None = None,
) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised lam -> characteristic value whose zeros are the eigenvalues.

    ``which`` defaults to 'D' when a Dirichlet leaf is given, else 'N'.
    """
    Q = PotentialVector.zero(tree) if Q is None else Q.check(tree)
    which = which or ("D" if dirichlet_leaf is not None else "N")
    idx = {"N": 0, "D": 1}[which]
    if method == "recursion":
        def f(lam):
            cp = char_pair(tree, Q, lam, dirichlet_leaf)
            return cp.phiN if idx == 0 else cp.phiD
    elif method == "determinant":
        leaf = dirichlet_leaf if idx == 1 else None
        if idx == 1 and leaf is None:
            leaf = default_port(tree)

        def f(lam):
            return det_char(tree, Q, lam, leaf)
    elif method == "psi":
        if not Q.is_zero:
            raise ValueError("psi method only applies to the zero potential")

        def f(lam):
            cp = psi_pair(tree, lam, dirichlet_leaf)
            return psi_scale(lam) * cp.phiN if idx == 0 else cp.phiD
    else:
        raise ValueError(f"unknown method {method!r}")
    return f
