"""Sturm-Liouville operators on metric trees.

Characteristic functions by leaf peeling, eigenvalue scans, simultaneous
Diophantine approximation of edge-length ratios, and numerical checks of
the Ambarzumyan-type uniqueness statement.
"""

from .charfn import CharPair, char_pair, det_char, psi_pair, sumK_estimate
from .diophantine import SimultaneousApprox, detect_rational, m_sequence, simultaneous_approx, tree_alphas
from .harness import ExperimentReport, ambarzumyan_experiment, charfn_samples, fd_eigenvalues
from .potentials import Constant, Poly, PotentialVector, Sampled, Zero, load_problem, parse_problem, sum_K
from .spectrum import MuSequence, Spectrum, mu_sequence, rho_near_mu, scan_spectrum, weyl_count
from .transfer import TransferValues, asymptotic_residuals, transfer_at
from .tree import Edge, MetricTree, TreeError, parse_tree, peel, peel_order, reroot, total_length

__version__ = "0.1.0"
