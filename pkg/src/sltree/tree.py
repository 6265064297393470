"""Metric trees with root-induced local coordinates.

Every edge carries a coordinate x in [0, a]; x = 0 sits at the endpoint
farther from the root (the *child*) and x = a at the endpoint closer to the
root (the *parent*).  Pendant vertices therefore always have coordinate 0,
except in derived subtrees whose root has become pendant.
"""

from __future__ import annotations

import json
import math
import re
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import mpmath

__all__ = [
    "TreeError",
    "ExactLength",
    "Edge",
    "MetricTree",
    "BoundaryMark",
    "PeelStep",
    "parse_length",
    "parse_tree",
    "parse_tree_document",
    "total_length",
    "peel",
    "peel_order",
    "next_leaf",
    "orient",
    "reroot",
    "reroot_edges",
    "build_tree",
    "TreeDocument",
]

NEUMANN = "neumann"
DIRICHLET = "dirichlet"


class TreeError(ValueError):
    pass


_UNITS = {"1": 1.0, "sqrt2": math.sqrt(2.0), "sqrt3": math.sqrt(3.0), "pi": math.pi}


@dataclass(frozen=True)
class ExactLength:
    """A length of the form ``coef * unit`` with rational ``coef``."""

    coef: Fraction
    unit: str = "1"

    def __float__(self) -> float:
        return float(self.coef) * _UNITS[self.unit]

    def mp(self, prec: int = 160) -> mpmath.mpf:
        with mpmath.workprec(prec):
            u = {
                "1": mpmath.mpf(1),
                "sqrt2": mpmath.sqrt(2),
                "sqrt3": mpmath.sqrt(3),
                "pi": mpmath.pi,
            }[self.unit]
            return mpmath.mpf(self.coef.numerator) / self.coef.denominator * u

    def __str__(self) -> str:
        if self.unit == "1":
            return str(self.coef)
        if self.coef == 1:
            return self.unit
        return f"{self.coef}*{self.unit}"


_LENGTH_RE = re.compile(
    r"^(?:(?P<coef>[0-9][0-9./eE+-]*)\*)?(?P<unit>sqrt2|sqrt3|pi)(?:/(?P<den>[0-9]+))?$"
)


def parse_length(token: str) -> ExactLength:
    """Parse ``1.5``, ``3/2``, ``sqrt2``, ``2*pi``, ``1/3*sqrt3`` or ``sqrt2/2``."""
    token = token.strip()
    m = _LENGTH_RE.match(token)
    try:
        if m:
            coef = Fraction(m.group("coef")) if m.group("coef") else Fraction(1)
            if m.group("den"):
                coef /= int(m.group("den"))
            out = ExactLength(coef, m.group("unit"))
        else:
            out = ExactLength(Fraction(token))
    except (ValueError, ZeroDivisionError) as exc:
        raise TreeError(f"bad length literal {token!r}") from exc
    if not out.coef > 0:
        raise TreeError(f"nonpositive length {token!r}")
    return out


@dataclass(frozen=True)
class Edge:
    id: int
    child: int
    parent: int
    length: float
    exact: ExactLength | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.length) and self.length > 0):
            raise TreeError(f"edge {self.id}: nonpositive length {self.length}")
        if self.child == self.parent:
            raise TreeError(f"edge {self.id}: loop at vertex {self.child}")

    def other(self, v: int) -> int:
        if v == self.child:
            return self.parent
        if v == self.parent:
            return self.child
        raise TreeError(f"vertex {v} is not an endpoint of edge {self.id}")

    def flipped(self) -> "Edge":
        return Edge(self.id, self.parent, self.child, self.length, self.exact)


@dataclass(frozen=True)
class BoundaryMark:
    vertex: int
    kind: str = NEUMANN


class MetricTree:
    """Immutable rooted metric tree.

    ``strict=True`` (the default for user input) additionally requires the
    root to be internal unless the tree is a single edge, which is flagged by
    :attr:`degenerate_root`.  Derived subtrees are built with ``strict=False``
    because peeling can leave the root pendant.
    """

    def __init__(self, edges: Iterable[Edge], root: int, *, strict: bool = True):
        edges = tuple(sorted(edges, key=lambda e: e.id))
        if not edges:
            raise TreeError("tree has no edges")
        ids = [e.id for e in edges]
        if len(set(ids)) != len(ids):
            raise TreeError("duplicate edge id")
        self._edges = edges
        self._by_id = {e.id: e for e in edges}
        self.root = root

        adj: dict[int, list[int]] = {}
        for e in edges:
            adj.setdefault(e.child, []).append(e.id)
            adj.setdefault(e.parent, []).append(e.id)
        self._adj = {v: tuple(sorted(es)) for v, es in adj.items()}
        if root not in self._adj:
            raise TreeError(f"root {root} is not a vertex of the tree")
        if len(self._adj) != len(edges) + 1:
            # connected + |V| = |E| + 1 <=> tree; check connectivity first
            self._bfs()
            raise TreeError("cycle detected")

        depth, via = self._bfs()
        for e in edges:
            if via.get(e.child) != e.id:
                raise TreeError(
                    f"edge {e.id}: child {e.child} is not farther from the root than parent {e.parent}"
                )
        self._depth = depth
        if strict and self.degree(root) < 2 and len(edges) > 1:
            raise TreeError("root is pendant")

    def _bfs(self):
        depth = {self.root: 0}
        via: dict[int, int] = {}
        queue = deque([self.root])
        while queue:
            v = queue.popleft()
            for eid in self._adj[v]:
                w = self._by_id[eid].other(v)
                if w in depth:
                    continue
                depth[w] = depth[v] + 1
                via[w] = eid
                queue.append(w)
        if len(depth) != len(self._adj):
            raise TreeError("disconnected graph")
        return depth, via

    # --- basic accessors ------------------------------------------------
    @property
    def edges(self) -> tuple[Edge, ...]:
        return self._edges

    @property
    def edge_ids(self) -> tuple[int, ...]:
        return tuple(e.id for e in self._edges)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    @property
    def vertices(self) -> tuple[int, ...]:
        return tuple(sorted(self._adj))

    def edge(self, eid: int) -> Edge:
        try:
            return self._by_id[eid]
        except KeyError:
            raise TreeError(f"no edge {eid}") from None

    def incident(self, v: int) -> tuple[int, ...]:
        return self._adj[v]

    def degree(self, v: int) -> int:
        return len(self._adj[v])

    def depth(self, v: int) -> int:
        return self._depth[v]

    @property
    def degenerate_root(self) -> bool:
        return self.degree(self.root) < 2

    @cached_property
    def pendant_vertices(self) -> tuple[int, ...]:
        return tuple(v for v in self.vertices if self.degree(v) == 1)

    @cached_property
    def internal_vertices(self) -> tuple[int, ...]:
        return tuple(v for v in self.vertices if self.degree(v) > 1)

    def is_boundary_edge(self, eid: int) -> bool:
        e = self.edge(eid)
        return self.degree(e.child) == 1 or self.degree(e.parent) == 1

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(e.length for e in self._edges)

    @property
    def total_length(self) -> float:
        return math.fsum(self.lengths)

    def exact_lengths(self) -> list[ExactLength] | None:
        if any(e.exact is None for e in self._edges):
            return None
        return [e.exact for e in self._edges]

    def subtree(self, edge_ids: Iterable[int]) -> "MetricTree":
        """Subtree on ``edge_ids`` rooted at its vertex closest to this root."""
        sub = [self._by_id[i] for i in edge_ids]
        verts = {e.child for e in sub} | {e.parent for e in sub}
        root = min(verts, key=lambda v: (self._depth[v], v))
        return MetricTree(sub, root, strict=False)

    def edge_set(self) -> frozenset[int]:
        return frozenset(self._by_id)

    def __eq__(self, other):
        return (
            isinstance(other, MetricTree)
            and self.root == other.root
            and self._edges == other._edges
        )

    def __hash__(self):
        return hash((self.root, self._edges))

    def __repr__(self):
        body = ", ".join(f"{e.id}:{e.child}->{e.parent}({e.length:g})" for e in self._edges)
        return f"MetricTree(root={self.root}, [{body}])"

    def describe(self) -> str:
        lines = [f"root {self.root}"]
        for e in self._edges:
            length = str(e.exact) if e.exact is not None else repr(e.length)
            lines.append(f"edge {e.id} {e.child} {e.parent} {length}")
        return "\n".join(lines) + "\n"


def total_length(tree: MetricTree) -> float:
    return tree.total_length


# --- peeling ---------------------------------------------------------------

@dataclass(frozen=True)
class PeelStep:
    removed_edge: int
    leaf_vertex: int
    attachment_vertex: int
    neumann_remainder: MetricTree
    dirichlet_subtrees: tuple[tuple[MetricTree, BoundaryMark], ...]


def peel(tree: MetricTree, leaf_edge: int, leaf_vertex: int | None = None) -> PeelStep:
    """Remove a boundary edge and split the rest at its attachment vertex.

    The remainder keeps Neumann (if the attachment vertex becomes pendant) or
    continuity/Kirchhoff conditions there; each split component carries a
    Dirichlet mark at its copy of the attachment vertex.
    """
    if tree.n_edges < 2:
        raise TreeError("cannot peel a single-edge tree")
    e = tree.edge(leaf_edge)
    if leaf_vertex is None:
        pendant = [v for v in (e.child, e.parent) if tree.degree(v) == 1]
        if not pendant:
            raise TreeError(f"edge {leaf_edge} is not a boundary edge")
        leaf_vertex = pendant[0]
    elif leaf_vertex not in (e.child, e.parent) or tree.degree(leaf_vertex) != 1:
        raise TreeError(f"vertex {leaf_vertex} is not a pendant endpoint of edge {leaf_edge}")
    attach = e.other(leaf_vertex)

    rest = [i for i in tree.edge_ids if i != leaf_edge]
    remainder = tree.subtree(rest)
    subtrees = []
    for start in remainder.incident(attach):
        comp = _component(remainder, attach, start)
        subtrees.append((tree.subtree(comp), BoundaryMark(attach, DIRICHLET)))
    return PeelStep(leaf_edge, leaf_vertex, attach, remainder, tuple(subtrees))


def _component(tree: MetricTree, cut: int, start_edge: int) -> list[int]:
    """Edges reachable through ``start_edge`` without passing ``cut``."""
    seen = {start_edge}
    stack = [tree.edge(start_edge).other(cut)]
    while stack:
        v = stack.pop()
        for eid in tree.incident(v):
            if eid not in seen:
                seen.add(eid)
                stack.append(tree.edge(eid).other(v))
    return sorted(seen)


def next_leaf(tree: MetricTree) -> tuple[int, int]:
    """(edge id, pendant vertex) of the deepest leaf, ties to the smallest edge id."""
    best = None
    for v in tree.pendant_vertices:
        eid = tree.incident(v)[0]
        key = (-tree.depth(v), eid)
        if best is None or key < best[0]:
            best = (key, eid, v)
    return best[1], best[2]


def peel_order(tree: MetricTree) -> tuple[int, ...]:
    order = []
    while tree.n_edges > 1:
        eid, v = next_leaf(tree)
        order.append(eid)
        tree = peel(tree, eid, v).neumann_remainder
    return tuple(order)


def orient(edges: Sequence[Edge], root: int) -> tuple[MetricTree, frozenset[int]]:
    """Orient an undirected edge list toward ``root``.

    Returns a non-strict tree and the ids of edges whose endpoints had to be
    swapped.
    """
    adj: dict[int, list[Edge]] = {}
    for e in edges:
        adj.setdefault(e.child, []).append(e)
        adj.setdefault(e.parent, []).append(e)
    if root not in adj:
        raise TreeError(f"root {root} is not a vertex")
    seen = {root}
    used: set[int] = set()
    out, flipped = [], set()
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for e in adj[v]:
            if e.id in used:
                continue
            used.add(e.id)
            w = e.other(v)
            if w in seen:
                raise TreeError("cycle detected")
            seen.add(w)
            if e.child == w:
                out.append(e)
            else:
                out.append(e.flipped())
                flipped.add(e.id)
            queue.append(w)
    if len(out) != len(edges):
        raise TreeError("disconnected graph")
    return MetricTree(out, root, strict=False), frozenset(flipped)


def reroot(tree: MetricTree, new_root: int) -> tuple[MetricTree, frozenset[int]]:
    """Re-orient toward ``new_root``; returns the tree and the ids of flipped edges."""
    out, flipped = orient(tree.edges, new_root)
    if out.n_edges > 1 and out.degenerate_root:
        raise TreeError("root is pendant")
    return out, flipped


# --- parsing ---------------------------------------------------------------

@dataclass
class TreeDocument:
    """Raw content of a tree description before orientation."""

    root: int | None = None
    edges: list[tuple[int, int, int, ExactLength]] = field(default_factory=list)
    potentials: dict[int, list[str]] = field(default_factory=dict)


def _read_lines(text: str) -> TreeDocument:
    doc = TreeDocument()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "root" and len(tok) == 2:
                doc.root = int(tok[1])
            elif tok[0] == "edge" and len(tok) == 5:
                doc.edges.append((int(tok[1]), int(tok[2]), int(tok[3]), parse_length(tok[4])))
            elif tok[0] == "potential" and len(tok) >= 3:
                eid = int(tok[1])
                if eid in doc.potentials:
                    raise TreeError(f"duplicate potential for edge {eid}")
                doc.potentials[eid] = tok[2:]
            else:
                raise TreeError(f"unrecognised line: {raw!r}")
        except TreeError as exc:
            raise TreeError(f"line {lineno}: {exc}") from None
        except ValueError:
            raise TreeError(f"line {lineno}: malformed {raw!r}") from None
    return doc


def _read_object(obj: dict) -> TreeDocument:
    if "tree" in obj and not ("edges" in obj):
        inner = obj["tree"]
        if isinstance(inner, str):
            return _read_lines(inner)
        if isinstance(inner, list):
            return _read_lines("\n".join(inner))
        return _read_object(inner)
    doc = TreeDocument(root=obj.get("root"))
    for item in obj.get("edges", []):
        if isinstance(item, dict):
            eid, c, p, ln = item["id"], item["child"], item["parent"], item["length"]
        else:
            eid, c, p, ln = item
        doc.edges.append((int(eid), int(c), int(p), parse_length(str(ln))))
    for key, spec in (obj.get("potentials") or {}).items():
        doc.potentials[int(key)] = spec.split() if isinstance(spec, str) else [str(s) for s in spec]
    return doc


def parse_tree_document(text: str) -> TreeDocument:
    """Read either the line grammar or its JSON embedding."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TreeError(f"bad JSON tree description: {exc}") from None
        return _read_object(obj)
    return _read_lines(text)


def build_tree(doc: TreeDocument) -> tuple[MetricTree, frozenset[int]]:
    if doc.root is None:
        raise TreeError("missing 'root' line")
    if not doc.edges:
        raise TreeError("tree has no edges")
    ids = [e[0] for e in doc.edges]
    if len(set(ids)) != len(ids):
        raise TreeError("duplicate edge id")
    raw = [Edge(eid, c, p, float(ln), ln) for eid, c, p, ln in doc.edges]
    return reroot_edges(raw, doc.root)


def reroot_edges(edges: Sequence[Edge], root: int) -> tuple[MetricTree, frozenset[int]]:
    tree, flipped = orient(edges, root)
    if tree.n_edges > 1 and tree.degenerate_root:
        raise TreeError("root is pendant")
    return tree, flipped


def parse_tree(text: str) -> MetricTree:
    """Parse a tree description (line grammar or JSON) into a validated tree.

    Edges written against the root's orientation are flipped; use
    :func:`sltree.potentials.parse_problem` to get potentials reinterpreted
    consistently.
    """
    tree, _ = build_tree(parse_tree_document(text))
    return tree
