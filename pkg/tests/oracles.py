"""Reference computations that share no code with the package."""

import math

import mpmath


def taylor_transfer(q, a, lam, dps=30):
    """(C, C', S, S') at x=a by mpmath's Taylor-series ODE solver."""
    with mpmath.workdps(dps):
        out = []
        for y0 in ([1, 0], [0, 1]):
            sol = mpmath.odefun(lambda x, y: [y[1], (q(x) - lam) * y[0]], 0, y0)
            out.append(sol(a))
        (c, cp), (s, sp) = out
        return float(c), float(cp), float(s), float(sp)


def constant_transfer(c, a, lam):
    """Closed form for q = c, written directly in terms of omega^2 = lam - c."""
    w2 = lam - c
    if w2 > 0:
        w = math.sqrt(w2)
        return math.cos(w * a), -w * math.sin(w * a), math.sin(w * a) / w, math.cos(w * a)
    if w2 < 0:
        k = math.sqrt(-w2)
        return math.cosh(k * a), k * math.sinh(k * a), math.sinh(k * a) / k, math.cosh(k * a)
    return 1.0, 0.0, a, 1.0


def pigeonhole_nested(alphas, n):
    """Literal double loop over p1 < p2 with cells from float fractional parts."""
    dim = len(alphas)
    total = n**dim + 1
    cells = [tuple(math.floor((p * x - math.floor(p * x)) * n) for x in alphas) for p in range(total)]
    for p1 in range(total):
        for p2 in range(p1 + 1, total):
            if cells[p1] == cells[p2]:
                m = p2 - p1
                k = tuple(math.floor(p2 * x) - math.floor(p1 * x) for x in alphas)
                return m, k
    raise AssertionError("no collision")


def star_psi_N(rho, n_legs=3):
    """psi_N of an equilateral unit star: n sin(rho) cos(rho)^(n-1)."""
    return n_legs * math.sin(rho) * math.cos(rho) ** (n_legs - 1)


def interval_neumann(a, count):
    return [(k * math.pi / a) ** 2 for k in range(count)]
