import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sltree.potentials import Poly, PotentialVector
from sltree.tree import parse_tree

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

SINGLE = "root 0\nedge 1 1 0 1\n"
PATH_12 = "root 0\nedge 1 1 0 1\nedge 2 2 0 2\n"
STAR_111 = "root 0\nedge 1 1 0 1\nedge 2 2 0 1\nedge 3 3 0 1\n"
STAR_IRR = "root 0\nedge 1 1 0 1\nedge 2 2 0 sqrt2\nedge 3 3 0 sqrt3\n"
PATH_IRR = "root 0\nedge 1 1 0 1\nedge 2 2 0 sqrt2\n"
# spine 0-4-6 with two legs on each spine vertex
CATERPILLAR = (
    "root 4\n"
    "edge 1 1 0 1.1\nedge 2 2 0 0.7\nedge 3 0 4 1.3\n"
    "edge 4 5 4 0.6\nedge 5 6 4 0.9\nedge 6 7 6 0.5\nedge 7 8 6 0.8\n"
)

FIXTURES = {
    "single": SINGLE,
    "path12": PATH_12,
    "star111": STAR_111,
    "star_irr": STAR_IRR,
    "caterpillar": CATERPILLAR,
}


def random_tree_text(rng: np.random.Generator, n_edges: int, lo=0.5, hi=1.5) -> str:
    """Random tree rooted at 0 with at least two root edges; vertex v hangs below a smaller id."""
    lines = ["root 0"]
    for v in range(1, n_edges + 1):
        parent = 0 if v <= 2 else int(rng.integers(0, v))
        lines.append(f"edge {v} {v} {parent} {rng.uniform(lo, hi)!r}")
    return "\n".join(lines) + "\n"


def smooth_potential(tree) -> PotentialVector:
    """Nonconstant polynomial potentials, different on every edge."""
    return PotentialVector(
        {e.id: Poly((0.5 * math.sin(e.id), 1.0, -0.8 + 0.1 * e.id), e.length) for e in tree.edges}
    )


@pytest.fixture(params=sorted(FIXTURES))
def fixture_tree(request):
    return parse_tree(FIXTURES[request.param])


@pytest.fixture
def star():
    return parse_tree(STAR_111)


@pytest.fixture
def single():
    return parse_tree(SINGLE)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
