import numpy as np
import pytest

from carnot.algebra import Covector, StepTwoAlgebra
from carnot.catalog import GAMatrix, free, from_ga, heisenberg, star


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


GA_2X2 = GAMatrix(entries=np.eye(2))
GA_2X3 = GAMatrix(entries=np.array([[1.0, 0.5, 0.0], [0.0, 1.0, -0.7]]))

GROUPS = {
    "heisenberg": heisenberg,
    "free:3": lambda: free(3),
    "star:2": lambda: star(2),
    "star:3": lambda: star(3),
    "ga:2x2": lambda: from_ga(GA_2X2),
    "ga:2x3": lambda: from_ga(GA_2X3),
}


@pytest.fixture
def heis() -> StepTwoAlgebra:
    return heisenberg()


@pytest.fixture(params=sorted(GROUPS))
def group(request) -> StepTwoAlgebra:
    return GROUPS[request.param]()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def unit_covectors(alg: StepTwoAlgebra, rng: np.random.Generator, count: int, radius: float = 1.0) -> list[Covector]:
    """Gaussian directions scaled to the given norm."""
    out = []
    for _ in range(count):
        v = rng.standard_normal(alg.n)
        v *= radius / np.linalg.norm(v)
        out.append(Covector.from_vector(v, alg.q1))
    return out
