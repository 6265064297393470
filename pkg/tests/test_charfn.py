import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sltree.charfn import (
    EstimatorError,
    assemble,
    char_pair,
    det_char,
    psi_pair,
    psi_scale,
    sumK_estimate,
)
from sltree.potentials import Constant, Poly, PotentialVector
from sltree.spectrum import scan_spectrum
from sltree.transfer import transfer_at
from sltree.tree import TreeError, parse_tree, reroot

from conftest import CATERPILLAR, FIXTURES, PATH_12, SINGLE, STAR_111, random_tree_text, smooth_potential
from oracles import star_psi_N

ROOT_TOL = 1e-8


def assert_same_zeros(a, b, tol=ROOT_TOL):
    assert a.multiplicities == b.multiplicities
    np.testing.assert_allclose(a.values, b.values, rtol=tol, atol=tol)


def test_single_edge_closed_form():
    t = parse_tree(SINGLE)
    Q = PotentialVector.zero(t)
    for rho in (0.3, 1.7, 4.2):
        cp = char_pair(t, Q, rho**2)
        assert cp.phiN == pytest.approx(rho * math.sin(rho), abs=1e-13)
        assert cp.phiD == pytest.approx(math.cos(rho), abs=1e-13)
    cp = char_pair(t, Q, math.pi**2)
    assert abs(cp.phiN) < 1e-13 and cp.phiD == pytest.approx(-1.0)


def test_psi_examples():
    p = psi_pair(parse_tree(SINGLE), math.pi**2)
    assert abs(p.phiN) < 1e-15 and p.phiD == pytest.approx(-1.0)
    path11 = parse_tree("root 0\nedge 1 1 0 1\nedge 2 2 0 1\n")
    assert abs(psi_pair(path11, (math.pi / 2) ** 2).phiN) < 1e-15
    star = parse_tree(STAR_111)
    assert psi_pair(star, (math.pi / 3) ** 2).phiN == pytest.approx(0.6495190528383290, rel=1e-14)


@pytest.mark.parametrize("rho", [0.2, 0.9, 1.3, 2.0, 2.9, 4.4])
def test_star_psi_matches_hand_recursion(rho):
    assert psi_pair(parse_tree(STAR_111), rho**2).phiN == pytest.approx(star_psi_N(rho), abs=1e-13)


def test_star_double_zero_at_half_pi():
    star = parse_tree(STAR_111)
    Q = PotentialVector.zero(star)
    h = 1e-3
    vals = [char_pair(star, Q, (math.pi / 2 + d) ** 2).phiN for d in (-h, 0.0, h)]
    assert abs(vals[1]) < 1e-14
    assert np.sign(vals[0]) == np.sign(vals[2])
    # second-order vanishing: halving the offset quarters the value
    half = char_pair(star, Q, (math.pi / 2 + h / 2) ** 2).phiN
    assert vals[2] / half == pytest.approx(4.0, rel=1e-2)


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_char_pair_matches_psi_pair(name):
    t = parse_tree(FIXTURES[name])
    Q = PotentialVector.zero(t)
    lam = np.random.default_rng(7).uniform(-20, 400, 100)
    cp, pp = char_pair(t, Q, lam), psi_pair(t, lam)
    scale = psi_scale(lam)
    np.testing.assert_allclose(cp.phiN, scale * pp.phiN, rtol=1e-9, atol=1e-9 * np.abs(scale).max())
    np.testing.assert_allclose(cp.phiD, pp.phiD, rtol=1e-9, atol=1e-9)


def test_det_single_edge_eigenvalue():
    t = parse_tree(SINGLE)
    assert abs(det_char(t, PotentialVector.zero(t), math.pi**2)) < 1e-13


def test_det_star_zero_set():
    star = parse_tree(STAR_111)
    spec = scan_spectrum(star, None, (0.01, 100.0), method="determinant")
    expected = [k * math.pi / 2 for k in range(1, 7)]
    np.testing.assert_allclose(np.sqrt(spec.values), expected, rtol=1e-10)
    assert spec.multiplicities == (2, 1, 2, 1, 2, 1)


def test_assembled_shape_and_rows():
    t = parse_tree(CATERPILLAR)
    m = assemble(t, PotentialVector.zero(t), 3.0, dirichlet_leaf=1)
    assert m.matrix.shape == (14, 14)
    assert len(m.rows) == 14 and len(m.columns) == 14
    assert sum(r.startswith("neumann") for r in m.rows) == 4
    assert m.rows.count("dirichlet v1") == 1
    assert sum(r.startswith("kirchhoff") for r in m.rows) == 3


def test_non_pendant_dirichlet_leaf():
    t = parse_tree(STAR_111)
    with pytest.raises(TreeError, match="pendant"):
        char_pair(t, PotentialVector.zero(t), 1.0, dirichlet_leaf=0)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_random_tree_constant_potentials_cross_oracle(seed):
    rng = np.random.default_rng(seed)
    t = parse_tree(random_tree_text(rng, 5))
    Q = PotentialVector({e.id: Constant(float(rng.uniform(-2, 2)), e.length) for e in t.edges})
    window = (-3.0, 150.0)
    assert_same_zeros(scan_spectrum(t, Q, window), scan_spectrum(t, Q, window, method="determinant"))


@pytest.mark.parametrize("name", ["path12", "star111", "star_irr", "caterpillar"])
def test_smooth_potential_cross_oracle(name):
    t = parse_tree(FIXTURES[name])
    Q = smooth_potential(t)
    window = (-3.0, 120.0)
    assert_same_zeros(scan_spectrum(t, Q, window), scan_spectrum(t, Q, window, method="determinant"))


@pytest.mark.parametrize("leaf", [1, 5, 8])
def test_dirichlet_cross_oracle(leaf):
    t = parse_tree(CATERPILLAR)
    Q = smooth_potential(t)
    window = (-3.0, 80.0)
    a = scan_spectrum(t, Q, window, dirichlet_leaf=leaf)
    b = scan_spectrum(t, Q, window, dirichlet_leaf=leaf, method="determinant")
    assert_same_zeros(a, b)


@pytest.mark.parametrize("new_root", [0, 6])
def test_reroot_invariance(new_root):
    t = parse_tree(CATERPILLAR)
    Q = smooth_potential(t)
    r, flipped = reroot(t, new_root)
    window = (-3.0, 120.0)
    assert_same_zeros(scan_spectrum(t, Q, window), scan_spectrum(r, Q.reversed_edges(flipped), window))


def test_constant_shift_moves_zeros():
    t = parse_tree(CATERPILLAR)
    Q = smooth_potential(t)
    c = 2.5
    base = scan_spectrum(t, Q, (-3.0, 100.0))
    shifted = scan_spectrum(t, Q.shifted(c), (-3.0 + c, 100.0 + c))
    assert base.multiplicities == shifted.multiplicities
    np.testing.assert_allclose(shifted.values, base.values + c, rtol=ROOT_TOL, atol=ROOT_TOL)


@given(st.floats(-20, 300), st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_single_peel_wronskian_identity(lam, cs):
    # path with edge 1 peeled first: phiN S1' + phiD C1' recovers the Neumann value of edge 2
    t = parse_tree(PATH_12)
    Q = PotentialVector({1: Poly((cs[0], 1.0), 1.0), 2: Poly((cs[1], -0.5), 2.0)})
    cp = char_pair(t, Q, lam, dirichlet_leaf=1)
    t1, t2 = transfer_at(Q[1], 1.0, lam), transfer_at(Q[2], 2.0, lam)
    lhs = cp.phiN * t1.Sp + cp.phiD * t1.Cp
    scale = 1 + abs(cp.phiN * t1.Sp) + abs(cp.phiD * t1.Cp)
    assert abs(lhs - (-t2.Cp)) <= 1e-9 * scale


def test_sumK_zero_potential_is_exact():
    star = parse_tree(STAR_111)
    Q = PotentialVector.zero(star)
    for n in (1, 5, 40):
        assert sumK_estimate(star, Q, n * math.pi) == 0.0


@pytest.mark.parametrize("c", [1.0, -2.0])
def test_sumK_single_edge_constant(c):
    t = parse_tree(SINGLE)
    Q = PotentialVector.constant(t, c)
    for n in (3, 20, 200):
        rho = n * math.pi
        w = math.sqrt(rho**2 - c)
        expected = -w * math.sin(w) / math.cos(n * math.pi)
        assert sumK_estimate(t, Q, rho) == pytest.approx(expected, rel=1e-9, abs=1e-10)
    assert sumK_estimate(t, Q, 2000 * math.pi) == pytest.approx(c / 2, rel=1e-3)


def test_sumK_two_edges_converges():
    t = parse_tree("root 0\nedge 1 1 0 1\nedge 2 2 0 1\n")
    Q = PotentialVector({1: Poly((0.0, 1.0), 1.0), 2: Constant(1.5, 1.0)})
    assert Q.sum_K() == pytest.approx(1.0)
    est = [sumK_estimate(t, Q, n * math.pi / 2) for n in (16, 64, 128)]
    assert abs(est[-1] - 1.0) < 0.05
    assert abs(est[-1] - 1.0) < abs(est[0] - 1.0) + 1e-12


def test_sumK_refuses_small_psiD():
    star = parse_tree(STAR_111)
    with pytest.raises(EstimatorError):
        sumK_estimate(star, PotentialVector.zero(star), math.pi / 2)
