"""Eigenvalue location: scan, bracket, refine, classify multiplicities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .charfn import characteristic, psi_pair
from .potentials import PotentialVector
from .tree import MetricTree

__all__ = [
    "Spectrum",
    "MuSequence",
    "SpectrumError",
    "WeylCountMismatch",
    "WeylRange",
    "scan_spectrum",
    "find_zeros",
    "bracket_roots",
    "weyl_count",
    "default_window",
    "explicit_multiplier",
    "mu_sequence",
    "rho_near_mu",
    "psi_N_rho",
    "loglog_slope",
]

EVEN_ROOT_THRESHOLD = 1e-6
_UNRESOLVED = 1e-7


class SpectrumError(RuntimeError):
    pass


class WeylCountMismatch(SpectrumError):
    pass


@dataclass(frozen=True)
class Spectrum:
    entries: tuple[tuple[float, int], ...]
    window: tuple[float, float]
    tol: float = 0.0

    def __post_init__(self):
        lams = [l for l, _ in self.entries]
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ValueError("spectrum entries must be strictly increasing")
        if any(m < 1 for _, m in self.entries):
            raise ValueError("multiplicities must be positive")

    def flat(self) -> np.ndarray:
        """Eigenvalues repeated according to multiplicity."""
        return np.array([l for l, m in self.entries for _ in range(m)], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.array([l for l, _ in self.entries], dtype=float)

    @property
    def multiplicities(self) -> tuple[int, ...]:
        return tuple(m for _, m in self.entries)

    @property
    def count(self) -> int:
        return sum(self.multiplicities)

    def __len__(self):
        return len(self.entries)

    def first(self, n: int) -> np.ndarray:
        return self.flat()[:n]


@dataclass(frozen=True)
class MuSequence:
    m_values: tuple[int, ...]
    mu_values: tuple[float, ...]
    total_length: float

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.m_values, self.m_values[1:])):
            raise ValueError("m values must be strictly increasing")


@dataclass(frozen=True)
class WeylRange:
    lo: int
    hi: int
    nominal: int

    def __contains__(self, n: int) -> bool:
        return self.lo <= n <= self.hi


# --- counting ----------------------------------------------------------------

def _count_dirichlet(lengths, lam: float) -> int:
    # decoupled Dirichlet intervals: #{k >= 1 : (k pi / a)^2 <= lam}
    if lam <= 0:
        return 0
    x = math.sqrt(lam) / math.pi
    return sum(math.floor(a * x) for a in lengths)


def _count_neumann(lengths, lam: float) -> int:
    if lam < 0:
        return 0
    x = math.sqrt(lam) / math.pi
    return sum(math.floor(a * x) + 1 for a in lengths)


def weyl_count(tree: MetricTree, window: tuple[float, float], Q: PotentialVector | None = None) -> WeylRange:
    """Admissible number of eigenvalues (with multiplicity) in [lo, hi].

    Decoupling the edges with Dirichlet or Neumann conditions at every vertex
    brackets the counting function (min-max), and qmin <= q <= qmax shifts it.
    """
    lo, hi = window
    qmin, qmax = (0.0, 0.0) if Q is None else Q.bounds()
    ls = tree.lengths
    eps = 1e-9
    up = lambda x: x + eps * max(1.0, abs(x))
    dn = lambda x: x - eps * max(1.0, abs(x))
    # N(hi) - N(lo-) with N_D(. - qmax) <= N(.) <= N_N(. - qmin)
    n_lo = _count_dirichlet(ls, dn(hi - qmax)) - _count_neumann(ls, up(lo - qmin))
    n_hi = _count_neumann(ls, up(hi - qmin)) - _count_dirichlet(ls, dn(lo - qmax))
    nominal = math.floor(tree.total_length * math.sqrt(max(hi, 0.0)) / math.pi)
    return WeylRange(max(0, n_lo), n_hi, nominal)


def default_window(tree: MetricTree, Q: PotentialVector, n_modes: int = 20) -> tuple[float, float]:
    """Lower end below every eigenvalue; upper end roughly ``n_modes`` modes up."""
    return -(Q.sup_abs() + 1.0), (n_modes * math.pi / tree.total_length) ** 2 + Q.sup_abs()


# --- root finding -----------------------------------------------------------

def _to_lam(t):
    return np.sign(t) * t * t


def _grid(window, dt, pad=0):
    lo, hi = window
    t_lo = math.copysign(math.sqrt(abs(lo)), lo)
    t_hi = math.copysign(math.sqrt(abs(hi)), hi)
    n = max(2, math.ceil((t_hi - t_lo) / dt) + 1)
    step = (t_hi - t_lo) / (n - 1)
    lam = _to_lam(np.linspace(t_lo - pad * step, t_hi + pad * step, n + 2 * pad))
    if not pad:
        lam[0], lam[-1] = lo, hi
    return lam


def _orders(f, xs, hs) -> np.ndarray:
    """Vanishing order at each xs[j] from |f| at distance h and 2h (one batched call)."""
    xs, hs = np.asarray(xs, dtype=float), np.asarray(hs, dtype=float)
    if xs.size == 0:
        return np.zeros(0)
    probes = np.concatenate([xs - hs, xs + hs, xs - 2 * hs, xs + 2 * hs])
    v = np.abs(np.asarray(f(probes), dtype=float)).reshape(4, -1)
    a, b = v[0] + v[1], v[2] + v[3]
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.log2(b / a)
    return np.where((a > 0) & (b > 0), k, 1.0)


def bracket_roots(f, lo, hi, flo=None, fhi=None, *, rel_tol=1e-12, max_iter=200) -> np.ndarray:
    """Refine many sign-change brackets at once (Illinois false position).

    Every iteration costs one vectorised call of ``f``.  A bracket that fails
    to halve in two consecutive iterations is bisected, so the worst case is
    that of bisection.
    """
    lo, hi = np.array(lo, dtype=float), np.array(hi, dtype=float)
    if lo.size == 0:
        return lo
    flo = np.asarray(f(lo) if flo is None else flo, dtype=float).copy()
    fhi = np.asarray(f(hi) if fhi is None else fhi, dtype=float).copy()
    if np.any(np.sign(flo) * np.sign(fhi) > 0):
        raise SpectrumError("bracket without a sign change")
    xtol = rel_tol * np.maximum(1.0, np.abs(lo))
    done = (flo == 0) | (fhi == 0)
    hi = np.where(flo == 0, lo, hi)
    lo = np.where(fhi == 0, hi, lo)
    last = np.zeros(lo.shape, dtype=int)      # -1: lo moved last, +1: hi moved last
    slow = np.zeros(lo.shape, dtype=int)
    for _ in range(max_iter):
        done |= (hi - lo) <= xtol
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        a, b, fa, fb = lo[act], hi[act], flo[act], fhi[act]
        with np.errstate(divide="ignore", invalid="ignore"):
            x = (a * fb - b * fa) / (fb - fa)
        bisect = (slow[act] >= 2) | ~np.isfinite(x) | (x <= a) | (x >= b)
        x = np.where(bisect, 0.5 * (a + b), x)
        fx = np.asarray(f(x), dtype=float)
        width = b - a
        left = np.sign(fx) == np.sign(fa)     # root lies in [x, b]
        zero = fx == 0
        # Illinois: halve the stale end value when the same side moves twice
        fb_new = np.where(left & (last[act] == -1), 0.5 * fb, fb)
        fa_new = np.where(~left & (last[act] == 1), 0.5 * fa, fa)
        lo[act] = np.where(left | zero, x, a)
        hi[act] = np.where(~left | zero, x, b)
        flo[act] = np.where(left, fx, fa_new)
        fhi[act] = np.where(left, fb_new, fx)
        last[act] = np.where(left, -1, 1)
        shrunk = (hi[act] - lo[act]) <= 0.5 * width
        slow[act] = np.where(shrunk | bisect, 0, slow[act] + 1)
        done[act] |= zero
    else:
        raise SpectrumError("bracket refinement did not converge")
    return 0.5 * (lo + hi)


def _odd(k: float) -> int:
    return 2 * max(0, round((k - 1) / 2)) + 1


def _even(k: float) -> int:
    return 2 * max(1, round(k / 2))


def _zoom_dip(f, a: float, b: float, points: int = 17):
    """Narrow onto the smallest |f| on [a, b], ``points`` samples per call.

    Returns ("cross", brackets) once f changes sign, ("zero", x) on an exact
    hit, or ("min", x, f(x)) at the bottom of the dip.
    """
    lo, hi = a, b
    for _ in range(60):
        xs = np.linspace(lo, hi, points)
        v = np.asarray(f(xs), dtype=float)
        hit = np.flatnonzero(v == 0)
        if hit.size:
            return ("zero", float(xs[hit[0]]))
        flip = np.flatnonzero(np.sign(v[:-1]) != np.sign(v[1:]))
        if flip.size:
            return ("cross", [(xs[j], xs[j + 1], v[j], v[j + 1]) for j in flip])
        j = int(np.argmin(np.abs(v)))
        if hi - lo <= 1e-13 * max(1.0, abs(lo)):
            break
        lo, hi = xs[max(j - 1, 0)], xs[min(j + 1, points - 1)]
    return ("min", float(xs[j]), float(v[j]))


def _dip(f, a: float, b: float, fa: float, fb: float):
    """Classify a dip of |f| on [a, b] (f has the same sign at a, mid and b).

    The critical point is the root of a central-difference derivative, which
    stays well conditioned at a double root where |f| itself is flat to
    rounding; the zoom search is the fallback when that derivative does not
    change sign.
    """
    h = 1e-5 * (b - a)

    def g(x):
        x = np.asarray(x, dtype=float)
        v = np.asarray(f(np.concatenate([x + h, x - h])), dtype=float)
        return v[: x.size] - v[x.size:]

    ends = g(np.array([a + h, b - h]))
    if not ends[0] * ends[1] < 0:
        return _zoom_dip(f, a, b)
    c = float(bracket_roots(g, [a + h], [b - h], ends[:1], ends[1:], rel_tol=1e-14)[0])
    fc = float(np.asarray(f(np.array([c])))[0])
    if fc == 0.0:
        return ("zero", c)
    if np.sign(fc) != np.sign(fa):
        return ("cross", [(a, c, fa, fc), (c, b, fc, fb)])
    return ("min", c, fc)


def find_zeros(
    f: Callable[[np.ndarray], np.ndarray],
    grid: np.ndarray,
    *,
    even_threshold: float = EVEN_ROOT_THRESHOLD,
) -> tuple[list[tuple[float, int]], float]:
    """Zeros of a vectorised real function sampled on an increasing grid.

    Sign changes are refined by batched false position; touching (even-order)
    zeros are found at local minima of |f| whose bottom value is below
    ``even_threshold`` times the local amplitude.  Multiplicities come from the
    local vanishing order.
    """
    fs = np.asarray(f(grid), dtype=float)
    if not np.all(np.isfinite(fs)):
        raise SpectrumError("characteristic function is not finite on the grid")
    n = len(grid)
    amp = np.abs(fs)
    roots: list[tuple[float, bool, float]] = []
    tol = 0.0

    def local_scale(i):
        return float(amp[max(0, i - 8): i + 9].max()) or 1.0

    def cell(i):
        return grid[min(i + 1, n - 1)] - grid[max(i - 1, 0)]

    def add(x, odd, i):
        roots.append((float(x), odd, cell(i)))

    def classify_dip(i, at=None):
        # at: an exact zero already known inside the dip
        a, b = grid[i - 1], grid[i + 1]
        found = _dip(f, a, b, fs[i - 1], fs[i + 1])
        nonlocal tol
        if found[0] == "cross":
            br = np.array(found[1])
            rs = bracket_roots(f, br[:, 0], br[:, 1], br[:, 2], br[:, 3])
            tol = max(tol, 1e-12 * max(1.0, abs(a)))
            if rs[-1] - rs[0] > _UNRESOLVED * max(1.0, abs(rs[0])):
                for r in rs:
                    add(r, True, i)
            else:
                # a pair closer than the resolution is a touching root
                add(float(np.mean(rs)), False, i)
        elif at is not None:
            add(at, False, i)
        elif found[0] == "zero":
            add(found[1], False, i)
        elif abs(found[2]) <= even_threshold * local_scale(i):
            add(found[1], False, i)

    sg = np.sign(fs)
    for i in range(n):
        if sg[i] == 0:
            # exact grid hit: parity from the neighbours
            left = sg[i - 1] if i > 0 else 0
            right = sg[i + 1] if i + 1 < n else 0
            if left and right and left == right:
                classify_dip(i, at=grid[i])
            else:
                add(grid[i], True, i)
    idx = np.flatnonzero(sg[:-1] * sg[1:] < 0)
    if idx.size:
        xs = bracket_roots(f, grid[idx], grid[idx + 1], fs[idx], fs[idx + 1])
        tol = max(tol, float(np.max(1e-12 * np.maximum(1.0, np.abs(grid[idx])))))
        for i, x in zip(idx, xs):
            add(x, True, i)
    for i in range(1, n - 1):
        if not (sg[i] != 0 and sg[i - 1] == sg[i] == sg[i + 1]):
            continue
        if not (amp[i] <= amp[i - 1] and amp[i] <= amp[i + 1]):
            continue
        classify_dip(i)

    roots.sort()
    xs = [x for x, _, _ in roots]
    kept, probe = [], []
    for j, (x, odd, width) in enumerate(roots):
        gap = min([abs(x - y) for y in xs[max(0, j - 1): j] + xs[j + 1: j + 2]] or [np.inf])
        if kept and gap <= 1e-9 * max(1.0, abs(x)) and abs(x - kept[-1][0]) <= 1e-9 * max(1.0, abs(x)):
            continue
        h = min(1e-3 * width, 0.25 * gap)
        kept.append((x, odd))
        probe.append(h if h > 1e-9 * max(1.0, abs(x)) else 0.0)
    probe = np.array(probe)
    use = probe > 0
    ks = np.array([1.0 if odd else 2.0 for _, odd in kept])
    ks[use] = _orders(f, np.array([x for x, _ in kept])[use], probe[use])
    merged = [(x, _odd(k) if odd else _even(k)) for (x, odd), k in zip(kept, ks)]
    return merged, tol


def scan_spectrum(
    tree: MetricTree,
    Q: PotentialVector | None = None,
    window: tuple[float, float] | None = None,
    *,
    step: float | None = None,
    dirichlet_leaf: int | None = None,
    method: str = "recursion",
    check_weyl: bool = True,
) -> Spectrum:
    """All eigenvalues in ``window`` as zeros of the characteristic function.

    The grid is uniform in t = sign(lam) sqrt|lam| with spacing pi/(8L) by
    default, i.e. eight samples per average eigenvalue gap.  ``step`` is a
    lambda-step; it must respect step <= pi^2 / (4 L sqrt(lam_hi)) and is
    converted to the equivalent t-spacing at the top of the window.
    """
    Q = PotentialVector.zero(tree) if Q is None else Q.check(tree)
    if window is None:
        window = default_window(tree, Q)
    lo, hi = map(float, window)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise SpectrumError(f"bad window {window!r}")
    L = tree.total_length
    dt = math.pi / (8 * L)
    if step is not None:
        top = math.sqrt(max(abs(hi), abs(lo), 1.0))
        limit = math.pi ** 2 / (4 * L * top)
        if not 0 < step <= limit:
            raise SpectrumError(f"step {step} exceeds the resolution limit {limit:.6g}")
        dt = min(dt, step / (2 * top))
    f = characteristic(tree, Q, method=method, dirichlet_leaf=dirichlet_leaf)
    # one extra cell on each side so that roots on the window edges are bracketed
    grid = _grid((lo, hi), dt, pad=1)
    entries, tol = find_zeros(f, grid)
    slack = lambda x: 1e-12 * max(1.0, abs(x))
    entries = [(min(max(x, lo), hi), m) for x, m in entries if lo - slack(lo) <= x <= hi + slack(hi)]
    spec = Spectrum(tuple(entries), (lo, hi), tol)
    if check_weyl and dirichlet_leaf is None:
        rng = weyl_count(tree, (lo, hi), Q)
        if spec.count not in rng:
            raise WeylCountMismatch(
                f"found {spec.count} eigenvalues in [{lo}, {hi}], admissible range [{rng.lo}, {rng.hi}]"
            )
    return spec


def explicit_multiplier(spec: Spectrum, total_length: float, *, max_m0: int = 64, tol: float = 1e-8) -> int | None:
    """Smallest m0 such that every (m m0 pi / L)^2 in the window is an eigenvalue.

    Only meaningful when at least two such points (m >= 1) fit in the window.
    """
    lo, hi = spec.window
    vals = spec.values
    for m0 in range(1, max_m0 + 1):
        step = m0 * math.pi / total_length
        targets = [(m * step) ** 2 for m in range(0, int(math.sqrt(max(hi, 0.0)) / step) + 1)]
        targets = [x for x in targets if x >= lo]
        if len(targets) < 3:
            return None
        if all(np.min(np.abs(vals - x)) <= tol * max(1.0, x) for x in targets):
            return m0
    return None


# --- localisation near mu_n -------------------------------------------------

def mu_sequence(tree: MetricTree, m_values: Sequence[int]) -> MuSequence:
    """mu_n = 2 pi m_n / L, computed in extended precision when lengths are exact."""
    import mpmath

    exact = tree.exact_lengths()
    with mpmath.workprec(160):
        L = mpmath.fsum(x.mp() for x in exact) if exact else mpmath.mpf(tree.total_length)
        mus = tuple(float(2 * mpmath.pi * int(m) / L) for m in m_values)
    return MuSequence(tuple(int(m) for m in m_values), mus, float(L))


def psi_N_rho(tree: MetricTree, rho):
    return psi_pair(tree, np.asarray(rho, dtype=float) ** 2).phiN


def _psi_floor(tree: MetricTree, mu: float) -> float:
    # rounding level of psi_N at rho = mu (arguments rho*a_i carry error ~ eps*rho*a_i)
    return 64 * np.finfo(float).eps * max(1.0, mu) * tree.total_length * tree.n_edges


def rho_near_mu(tree: MetricTree, mu: float, *, xtol: float = 1e-14) -> float:
    """Zero of psi_N (in rho) nearest to ``mu``.

    The slope of psi_N near mu is close to L, so the search starts with the
    half-width 2|psi_N(mu)|/L and doubles it up to ten times that size.  A
    value at the rounding floor is reported as an exact zero.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    f = lambda r: float(psi_N_rho(tree, r))
    f0 = f(mu)
    if abs(f0) <= _psi_floor(tree, mu):
        return float(mu)
    L = tree.total_length
    d0 = 2 * abs(f0) / L
    d = d0
    while d <= 10 * d0 * (1 + 1e-12):
        found = []
        for x in (mu - d, mu + d):
            fx = f(x)
            if fx == 0.0:
                found.append(x)
            elif np.sign(fx) != np.sign(f0):
                a, b = sorted((mu, x))
                found.append(brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200))
        if found:
            return float(min(found, key=lambda r: abs(r - mu)))
        d *= 2
    raise SpectrumError(f"no zero of psi_N within {10 * d0:.3g} of mu={mu:.12g} (|psi_N(mu)|={abs(f0):.3g})")


def loglog_slope(x, y) -> tuple[float, float]:
    """Least-squares (slope, intercept) of log|y| against log x."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    if np.any(y <= 0):
        raise ValueError("log-log fit needs nonzero values")
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(intercept)
