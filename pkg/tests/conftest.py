import numpy as np
import pytest

from nleig import GraphTV, GridDomain, build_grid_graph, build_knn_graph, zero_mean
from nleig.evaluation import rectangle_indicator, zero_mean_indicator_lambda

_ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def report():
    def add(tag, ok, detail=""):
        line = f"{tag}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
    return add


@pytest.fixture(scope="session")
def grid64():
    g = GridDomain(64, 64)
    return g, GraphTV(build_grid_graph(g), 1)


@pytest.fixture(scope="session")
def rect_eig(grid64):
    """Zero-mean rectangle indicator and its exact eigenvalue for anisotropic TV."""
    g, J = grid64
    ind = rectangle_indicator(g, (20, 40), (16, 44))
    return zero_mean(ind), zero_mean_indicator_lambda(ind, J)


@pytest.fixture(scope="session")
def moons():
    from sklearn.datasets import make_moons
    X, lab = make_moons(500, noise=0.1, random_state=0)
    G = build_knn_graph(X, 10)
    rng = np.random.default_rng(0)
    u0 = np.where(lab == 0, 1.0, -1.0) + 1.5 * rng.standard_normal(500)
    return G, lab, u0


def agreement(u, lab):
    a = float(np.mean((u > 0) == (lab == 0)))
    return max(a, 1 - a)
