import numpy as np
import pytest

from steklov_lab.eigen import EigenOptions, dense_oracle_p2, first_eigenpair
from steklov_lab.mesh import box_mesh, disk_mesh
from steklov_lab.weights import parse_weight, perturbation_weight, sample_on_boundary

P2_WEIGHT = "composite:g3-box:q=2"
P15_WEIGHT = "composite:g3-box:q=4"


@pytest.fixture(scope="session")
def box20():
    return box_mesh(0.25, 20)


@pytest.fixture(scope="session")
def box8():
    return box_mesh(0.25, 8)


@pytest.fixture(scope="session")
def disk2048():
    return disk_mesh(2048)


@pytest.fixture(scope="session")
def g_p2(box20):
    return sample_on_boundary(parse_weight(P2_WEIGHT), box20)


@pytest.fixture(scope="session")
def g_p15(box20):
    return sample_on_boundary(parse_weight(P15_WEIGHT), box20)


@pytest.fixture(scope="session")
def f_p2(g_p2):
    return perturbation_weight(g_p2)


@pytest.fixture(scope="session")
def eig_p2(box20, g_p2):
    return first_eigenpair(box20, g_p2, 2.0, EigenOptions(seeds=8, rng_seed=0))


@pytest.fixture(scope="session")
def eig_p15(box20, g_p15):
    return first_eigenpair(box20, g_p15, 1.5, EigenOptions(seeds=8, rng_seed=0))


@pytest.fixture(scope="session")
def oracle_p2(box20, g_p2):
    return dense_oracle_p2(box20, g_p2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def acceptance(request, capsys):
    """``acceptance(n, ok, detail)`` records and prints one PASS/FAIL line, then asserts ``ok``."""

    def report(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[ACCEPTANCE].append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
