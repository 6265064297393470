"""Exit criteria, one test per criterion.

Each test records a PASS/FAIL line; the lines are printed in the pytest
terminal summary and when this file is run directly.
"""

import json
import math
import time

import numpy as np
import pytest

from sltree.charfn import psi_pair, sumK_estimate
from sltree.cli import main as cli_main
from sltree.diophantine import simultaneous_approx
from sltree.harness import fd_eigenvalues, first_eigenvalues, rho_ladder
from sltree.potentials import Constant, Poly, PotentialVector, Sampled, Zero
from sltree.spectrum import explicit_multiplier, loglog_slope, psi_N_rho, scan_spectrum
from sltree.transfer import transfer_at
from sltree.tree import parse_tree

from conftest import FIXTURES, PATH_12, PATH_IRR, SINGLE, STAR_111, STAR_IRR, random_tree_text, smooth_potential

pytestmark = pytest.mark.acceptance

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n:>2}: {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def note(n: int, detail: str) -> None:
    # supplementary evidence, printed under the criterion line
    RESULTS[n] = RESULTS.get(n, "") + f"\n        {detail}"
    print(f"        {detail}")


def test_c01_interval_spectrum():
    t = parse_tree(SINGLE)
    start = time.perf_counter()
    vals = first_eigenvalues(t, None, 20)
    elapsed = time.perf_counter() - start
    exact = np.array([(k * math.pi) ** 2 for k in range(20)])
    err = np.abs(vals - exact) / np.maximum(1.0, exact)
    ok = bool(err.max() <= 1e-8 and elapsed < 1.0)
    record(1, ok, f"first 20 = (k pi)^2, max rel err {err.max():.2e}, {elapsed:.3f} s")


def test_c02_rational_lengths():
    t = parse_tree(PATH_12)
    L = t.total_length
    spec = scan_spectrum(t, None, (-1.0, 500.0))
    m0 = explicit_multiplier(spec, L)
    assert m0 is not None
    targets = [(m * m0 * math.pi / L) ** 2 for m in range(int(math.sqrt(500.0) * L / (m0 * math.pi)) + 1)]
    worst = max(np.min(np.abs(spec.values - x)) / max(1.0, x) for x in targets)
    record(2, bool(worst <= 1e-8), f"m0 = {m0}, {len(targets)} ladder points in window, worst rel err {worst:.2e}")


def test_c03_star_multiplicity():
    spec = scan_spectrum(parse_tree(STAR_111), None, (-1.0, 25.0))
    exact = [0.0, (math.pi / 2) ** 2, math.pi**2, (3 * math.pi / 2) ** 2]
    ok_vals = len(spec) == 4 and np.allclose(spec.values, exact, rtol=1e-8, atol=1e-8)
    ok_mult = spec.multiplicities == (1, 2, 1, 2)
    record(3, bool(ok_vals and ok_mult), f"entries {[(round(l, 10), m) for l, m in spec.entries]}")


def test_c04_recursion_vs_determinant():
    rng = np.random.default_rng(20240)
    start = time.perf_counter()
    worst, details = 0.0, []
    ok = True
    for _ in range(5):
        n_edges = int(rng.integers(2, 8))
        t = parse_tree(random_tree_text(rng, n_edges))
        Q = PotentialVector({e.id: Constant(float(rng.uniform(-5, 5)), e.length) for e in t.edges})
        a = scan_spectrum(t, Q, (-6.0, 400.0))
        b = scan_spectrum(t, Q, (-6.0, 400.0), method="determinant")
        same = a.multiplicities == b.multiplicities and len(a) == len(b)
        diff = float(np.max(np.abs(a.values - b.values) / np.maximum(1.0, np.abs(a.values)))) if same else math.inf
        ok &= same and diff <= 1e-8
        worst = max(worst, diff)
        details.append(f"I={n_edges}:{a.count}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    record(4, bool(ok), f"trees {', '.join(details)} eigenvalues; worst rel diff {worst:.2e}; {elapsed:.1f} s")


def test_c05_constant_shift():
    worst = 0.0
    for name in sorted(FIXTURES):
        t = parse_tree(FIXTURES[name])
        Q = smooth_potential(t)
        base = first_eigenvalues(t, Q, 8)
        for c in (-2.0, 3.0):
            shifted = first_eigenvalues(t, Q.shifted(c), 8)
            worst = max(worst, float(np.max(np.abs(shifted - (base + c)))))
    record(5, worst <= 1e-6, f"{len(FIXTURES)} fixtures, c in {{-2, 3}}, first 8 eigenvalues, worst |diff| {worst:.2e}")


def test_c06_wronskian():
    rng = np.random.default_rng(6)
    worst, total = 0.0, 0
    for j in range(100):
        a = float(rng.uniform(0.1, 1.5))
        kind = j % 4
        if kind == 0:
            p = Zero(a)
        elif kind == 1:
            p = Constant(float(rng.uniform(-5, 5)), a)
        elif kind == 2:
            p = Poly(tuple(rng.uniform(-3, 3, int(rng.integers(1, 5)))), a)
        else:
            xs = np.linspace(0, a, int(rng.integers(2, 12)))
            p = Sampled(tuple(xs), tuple(rng.uniform(-3, 3, xs.size)), a)
        lam = rng.uniform(-10, 400, 100)
        w = transfer_at(p, a, lam).wronskian()
        worst = max(worst, float(np.max(np.abs(w - 1))))
        total += lam.size
    record(6, worst <= 1e-10, f"{total} triples (zero/constant/poly/sampled), max |W - 1| {worst:.2e}")


def test_c07_diophantine():
    alphas = (math.sqrt(2) - 1, 2 - math.sqrt(2))
    rows, ok = [], True
    for n in (5, 10, 20, 30):
        r = simultaneous_approx(alphas, n)
        ok &= r.satisfies_bound() and (n < 2 or sum(r.k) == r.m)
        rows.append(f"n={n}: m={r.m} k={r.k}")
    ok &= (r.m, r.k) == (29, (12, 17))
    record(7, bool(ok), "; ".join(rows))


def _ladder(tree, terms):
    ladder = rho_ladder(tree, terms)
    mus = np.array([u for _, u, _ in ladder])
    rhos = np.array([r for _, _, r in ladder])
    psi = psi_pair(tree, mus**2)
    return ladder, mus, rhos, np.abs(psi.phiN), np.abs(psi.phiD - 1)


def _floor(tree, mus):
    # rounding level of the closed-form evaluation at rho = mu
    return 64 * np.finfo(float).eps * mus * tree.total_length * tree.n_edges


def test_c08_psi_decay():
    t = parse_tree(PATH_IRR)
    I = t.n_edges
    _, mus, _, psiN, psiD1 = _ladder(t, 10)
    assert len(mus) >= 6
    floor = _floor(t, mus)
    if np.all(psiN <= floor) and np.all(psiD1 <= floor):
        # two edges always form a path: psi_N = sin(rho L), psi_D = cos(rho L) vanish/equal 1 at mu_n
        ok, detail = True, (
            f"{len(mus)} points, mu up to {mus[-1]:.3g}: |psi_N(mu_n)| <= {psiN.max():.1e} and "
            f"|psi_D(mu_n) - 1| <= {psiD1.max():.1e} (rounding level), bound holds identically"
        )
    else:
        sN, _ = loglog_slope(mus, psiN)
        sD, _ = loglog_slope(mus, psiD1)
        ok = sN <= -1 / I + 0.15 and sD <= -1 / I + 0.15
        detail = f"{len(mus)} points, slopes psi_N {sN:.3f}, psi_D - 1 {sD:.3f} (limit {-1 / I + 0.15:.3f})"
    # non-degenerate companion: star with lengths (1, sqrt2, sqrt3)
    star = parse_tree(STAR_IRR)
    _, smu, _, sN_vals, sD_vals = _ladder(star, 8)
    sN, _ = loglog_slope(smu, sN_vals)
    sD, _ = loglog_slope(smu, sD_vals)
    limit = -1 / star.n_edges + 0.15
    star_ok = sN <= limit and sD <= limit
    record(8, bool(ok and star_ok), detail)
    note(8, f"star (1, sqrt2, sqrt3), {len(smu)} points: slopes psi_N {sN:.3f}, psi_D - 1 {sD:.3f} (limit {limit:.3f})")


def test_c09_localization():
    t = parse_tree(PATH_IRR)
    ladder, mus, rhos, _, _ = _ladder(t, 10)
    scaled = np.abs(rhos - mus) * np.sqrt(mus)
    residual = np.abs(psi_N_rho(t, rhos))
    bounded = scaled.max() <= 10 * np.median(scaled)
    zeros = bool(np.all(residual <= 1e-10))
    detail = (
        f"{len(mus)} points, max |rho-mu| mu^(1/2) = {scaled.max():.2e}, median {np.median(scaled):.2e}, "
        f"max |psi_N(rho_n)| {residual.max():.1e}"
    )
    star = parse_tree(STAR_IRR)
    _, smu, srho, _, _ = _ladder(star, 8)
    s_scaled = np.abs(srho - smu) * smu ** (1 / star.n_edges)
    s_res = np.abs(psi_N_rho(star, srho))
    half = len(s_scaled) // 2
    star_ok = s_scaled[half:].max() <= s_scaled[:half].max() and bool(np.all(s_res <= 1e-10))
    record(9, bool(bounded and zeros and star_ok), detail)
    note(9, f"star (1, sqrt2, sqrt3): |rho-mu| mu^(1/3) from {s_scaled[0]:.2e} to {s_scaled[-1]:.2e}, "
            f"later-half max {s_scaled[half:].max():.2e} <= first-half max {s_scaled[:half].max():.2e}; "
            f"max |psi_N(rho_n)| {s_res.max():.1e}")


def test_c10_estimator():
    t = parse_tree(SINGLE)
    Q = PotentialVector.constant(t, 1.0)
    worst = 0.0
    for n in range(10, 61):
        rho = n * math.pi
        w = math.sqrt(rho**2 - 1.0)
        closed = -w * math.sin(w) / math.cos(n * math.pi)
        est = sumK_estimate(t, Q, rho)
        worst = max(worst, abs(est - closed) / abs(closed))
    final = sumK_estimate(t, Q, 60 * math.pi)
    ok = abs(final - 0.5) <= 0.05 * 0.5 and worst <= 1e-8
    record(10, ok, f"estimate at n=60: {final:.8f} (target 0.5); closed form agrees to {worst:.1e} rel")


def test_c11_fd_oracle():
    start = time.perf_counter()
    worst, ok = 0.0, True
    for name in sorted(FIXTURES):
        t = parse_tree(FIXTURES[name])
        Q = smooth_potential(t)
        scan = first_eigenvalues(t, Q, 5)
        fd = fd_eigenvalues(t, Q, 1e-3, 5).flat()
        d = float(np.max(np.abs(scan - fd)))
        worst = max(worst, d)
        ok &= d <= 1e-2
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    record(11, bool(ok), f"{len(FIXTURES)} fixtures, first 5 eigenvalues, worst |scan - fd| {worst:.2e}, {elapsed:.1f} s")


def test_c12_ambarzumyan(tmp_path, capsys):
    xs = np.linspace(0.0, 1.0, 201)
    samples = " ".join(f"{float(x)!r} {2 * math.cos(2 * math.pi * x)!r}" for x in xs)
    path = tmp_path / "bump.tree"
    path.write_text(STAR_111 + f"potential 1 samples {samples}\n")
    code = cli_main(["verify", "--tree", str(path), "--n", "10", "--json"])
    report = json.loads(capsys.readouterr().out)
    true, est = report["sumK_true"], report["sumK_estimate"]
    half_abs = 0.5 * 4 / math.pi  # (1/2) * integral of |2 cos 2 pi x| over [0, 1]
    ok = (
        code == 0
        and report["max_gap"] > 1e-3
        and abs(est - true) <= 0.1 * max(abs(true), half_abs)
        and report["verdict"] == "spectra differ"
    )
    with capsys.disabled():
        record(12, bool(ok), f"max gap {report['max_gap']:.4f}, sum K true {true:.1e} estimate {est:.1e}, "
                             f"verdict '{report['verdict']}', exit code {code}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
